use std::path::PathBuf;

use clap::Args;
use percept_core::data::to_range;
use percept_core::elvae::{draw_eps, elvae_loss_with_noise, ElVae, ElVaeConfig};
use percept_core::losses::{LossFunction, LossKind};
use percept_core::metrics::{
    fd_gradient, fd_gradient_at, max_relative_error, ms_ssim_grad, ssim_grad, MetricKind,
};
use percept_core::nn::{Init, LayerSpec, Mode, Network, Padding, Shape};
use percept_core::rng;
use percept_core::util::fmt_sig6;
use percept_core::util::test_support::{random_field, random_pair};
use percept_core::{Field, MetricParams, PixelRange};
use rand::Rng as _;

use crate::config::{GradCheckConfig, RunConfig};
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Run config with an optional grad_check block.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Test hook: skew the analytic gradient of the named check.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

type RunFn = Box<dyn Fn(&Ctx) -> Result<f64, CliError>>;

struct Check {
    name: String,
    run: RunFn,
}

fn check(name: String, run: impl Fn(&Ctx) -> Result<f64, CliError> + 'static) -> Check {
    Check {
        name,
        run: Box::new(run),
    }
}

struct Ctx<'a> {
    cfg: &'a GradCheckConfig,
    seed: u64,
    corrupt: bool,
}

impl Ctx<'_> {
    /// Applies the corruption hook to an analytic gradient.
    fn maybe_corrupt(&self, g: &mut [f64]) {
        if self.corrupt && !g.is_empty() {
            let s = g.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            g[0] += 0.01 * s;
        }
    }
}

fn metric_checks(cfg: &GradCheckConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    for &n in &cfg.ssim_sizes {
        checks.push(check(format!("ssim/{n}x{n}"), move |ctx| {
            let p = MetricParams::ssim_default();
            let mut worst = 0.0f64;
            for k in 0..ctx.cfg.pairs as u64 {
                let (x, y) = random_pair(n, n, 0.2, ctx.seed.wrapping_add(k));
                let mut g = ssim_grad(&x, &y, &p)?.gradient.expect("gradient");
                ctx.maybe_corrupt(g.data_mut());
                let fd = fd_gradient(MetricKind::Ssim, &x, &y, &p, ctx.cfg.eps)?;
                worst = worst.max(max_relative_error(g.data(), fd.data()));
            }
            Ok(worst)
        }));
    }
    let (n, m) = (cfg.ms_ssim_size, cfg.ms_ssim_scales);
    checks.push(check(format!("ms_ssim/M{m}/{n}x{n}"), move |ctx| {
        let p = MetricParams::ssim_default().with_scales(m);
        let mut worst = 0.0f64;
        for k in 0..ctx.cfg.pairs as u64 {
            let seed = ctx.seed.wrapping_add(k);
            let (x, y) = random_pair(n, n, 0.2, seed);
            let mut r = rng::stream(seed, "grad-check-pixels");
            let idx: Vec<usize> = (0..ctx.cfg.ms_ssim_pixels.min(n * n))
                .map(|_| r.random_range(0..n * n))
                .collect();
            let g = ms_ssim_grad(&x, &y, &p)?.gradient.expect("gradient");
            let mut picked: Vec<f64> = idx.iter().map(|&q| g.data()[q]).collect();
            ctx.maybe_corrupt(&mut picked);
            let fd = fd_gradient_at(MetricKind::MsSsim, &x, &y, &p, ctx.cfg.eps, &idx)?;
            worst = worst.max(max_relative_error(&picked, &fd));
        }
        Ok(worst)
    }));
    for kind in [LossKind::Mse, LossKind::Mae] {
        checks.push(check(kind.name().to_string(), move |ctx| {
            let loss = LossFunction::new(kind, MetricParams::ssim_default());
            let mut worst = 0.0f64;
            for k in 0..ctx.cfg.pairs as u64 {
                let (x, y) = random_pair(12, 12, 0.2, ctx.seed.wrapping_add(k));
                let (_, mut g) = loss.value_and_grad(&x, &y)?;
                ctx.maybe_corrupt(g.data_mut());
                let fd = central_diff(y.data(), ctx.cfg.eps, |v| {
                    let f = Field::new(12, 12, v.to_vec()).expect("dims");
                    loss.value(&x, &f).expect("valid pair")
                });
                worst = worst.max(max_relative_error(g.data(), &fd));
            }
            Ok(worst)
        }));
    }
    checks
}

fn central_diff(at: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = at.to_vec();
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + eps;
            let up = f(&v);
            v[i] = orig - eps;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn seeded(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = rng::stream(seed, "grad-check-values");
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst of the parameter and input errors for `<c, net(x)>`.
fn layer_error(specs: &[LayerSpec], input: Shape, ctx: &Ctx) -> Result<f64, CliError> {
    let mut net = Network::new(specs, input, Init::FanInUniform, ctx.seed)?;
    let p: Vec<f64> = net
        .params()
        .iter()
        .zip(seeded(net.num_params(), ctx.seed ^ 2, -0.1, 0.1))
        .map(|(w, d)| w + d)
        .collect();
    net.set_params(&p)?;
    // Alternating signs, bounded away from zero, keep relu off its kink.
    let x: Vec<f64> = seeded(input.len(), ctx.seed ^ 3, 0.05, 1.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    let c = seeded(net.output_shape().len(), ctx.seed ^ 4, -1.0, 1.0);
    let (_, tape) = net.forward(&x, Mode::Train)?;
    let mut g = net.backward(&tape, &c)?;
    ctx.maybe_corrupt(&mut g.input);
    let eps = ctx.cfg.eps;
    let fd_x = central_diff(&x, eps, |v| dot(&c, &net.predict(v).expect("shape")));
    let mut probe = net.clone();
    let fd_p = central_diff(&p, eps, |v| {
        probe.set_params(v).expect("finite");
        dot(&c, &probe.predict(&x).expect("shape"))
    });
    let ep = if p.is_empty() {
        0.0
    } else {
        max_relative_error(&g.params, &fd_p)
    };
    Ok(ep.max(max_relative_error(&g.input, &fd_x)))
}

fn layer_checks() -> Vec<Check> {
    let valid = LayerSpec::Conv2d {
        filters: 2,
        kernel: 3,
        stride: 2,
        padding: Padding::Valid,
    };
    let cases: Vec<(&str, Vec<LayerSpec>, Shape)> = vec![
        ("dense", vec![LayerSpec::dense(12, 5)], Shape::flat(12)),
        (
            "conv_same",
            vec![LayerSpec::conv(3, 3, 1)],
            Shape::new(2, 6, 6),
        ),
        (
            "conv_stride2",
            vec![LayerSpec::conv(2, 5, 2)],
            Shape::new(1, 8, 8),
        ),
        ("conv_valid", vec![valid], Shape::new(2, 7, 7)),
        ("upsample2", vec![LayerSpec::Upsample2], Shape::new(2, 3, 3)),
        ("relu", vec![LayerSpec::relu()], Shape::flat(9)),
        ("tanh", vec![LayerSpec::tanh()], Shape::flat(9)),
        (
            "reshape",
            vec![LayerSpec::Reshape {
                channels: 1,
                height: 3,
                width: 4,
            }],
            Shape::flat(12),
        ),
    ];
    let mut checks: Vec<Check> = cases
        .into_iter()
        .map(|(name, specs, input)| {
            check(format!("layer/{name}"), move |ctx| {
                layer_error(&specs, input, ctx)
            })
        })
        .collect();
    checks.push(check("layer/binarize_ste".into(), |ctx| {
        // The straight-through backward pass is the identity.
        let net = Network::new(
            &[LayerSpec::BinarizeSte],
            Shape::flat(10),
            Init::FanInUniform,
            ctx.seed,
        )?;
        let x = seeded(10, ctx.seed ^ 5, -1.0, 1.0);
        let c = seeded(10, ctx.seed ^ 6, -1.0, 1.0);
        let (_, tape) = net.forward(&x, Mode::Train)?;
        let mut g = net.backward(&tape, &c)?.input;
        ctx.maybe_corrupt(&mut g);
        Ok(max_relative_error(&g, &c))
    }));
    checks
}

fn elvae_checks() -> Vec<Check> {
    let cases = [
        ("elvae/mse", LossKind::Mse, MetricParams::ssim_default()),
        (
            "elvae/ssim",
            LossKind::NegSsim,
            MetricParams::ssim_default()
                .with_window(5)
                .with_dynamic_range(2.0),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, kind, params)| {
            check(name.to_string(), move |ctx| {
                let model = ElVae::new(
                    &[
                        LayerSpec::dense(36, 8),
                        LayerSpec::tanh(),
                        LayerSpec::dense(8, 4),
                    ],
                    &[
                        LayerSpec::dense(2, 8),
                        LayerSpec::tanh(),
                        LayerSpec::dense(8, 36),
                        LayerSpec::tanh(),
                    ],
                    (6, 6),
                    2,
                    Init::FanInUniform,
                    ctx.seed,
                )?;
                let x = to_range(&[random_field(6, 6, ctx.seed)], PixelRange::Signed).remove(0);
                let cfg = ElVaeConfig::new(50.0, 2, LossFunction::new(kind, params.clone()));
                let eps = draw_eps(ctx.seed, 1, 2);
                let (_, g) = elvae_loss_with_noise(&x, &model, &cfg, &eps)?;
                let mut analytic = [g.encoder, g.decoder].concat();
                ctx.maybe_corrupt(&mut analytic);
                let n_enc = model.encoder.num_params();
                let params = [model.encoder.params(), model.decoder.params()].concat();
                let mut probe = model.clone();
                let fd = central_diff(&params, ctx.cfg.eps, |v| {
                    probe.encoder.set_params(&v[..n_enc]).expect("finite");
                    probe.decoder.set_params(&v[n_enc..]).expect("finite");
                    elvae_loss_with_noise(&x, &probe, &cfg, &eps)
                        .expect("valid")
                        .0
                        .value
                });
                Ok(max_relative_error(&analytic, &fd))
            })
        })
        .collect()
}

pub fn all_checks(cfg: &GradCheckConfig) -> Vec<String> {
    suite(cfg).into_iter().map(|c| c.name).collect()
}

fn suite(cfg: &GradCheckConfig) -> Vec<Check> {
    let mut checks = metric_checks(cfg);
    checks.extend(layer_checks());
    checks.extend(elvae_checks());
    checks
}

pub fn run(args: &GradCheckArgs, g: &Global) -> Result<(), CliError> {
    let run_cfg = RunConfig::resolve(args.config.as_deref(), g.seed, g.out_dir.as_deref())?;
    let cfg = run_cfg.grad_check()?;
    let checks = suite(&cfg);
    if let Some(name) = &args.corrupt {
        if !checks.iter().any(|c| &c.name == name) {
            return Err(CliError::usage(format!(
                "--corrupt: no check named {name:?}; checks are {:?}",
                all_checks(&cfg)
            )));
        }
    }
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut failed = Vec::new();
    for check in &checks {
        let ctx = Ctx {
            cfg: &cfg,
            seed: run_cfg.seed,
            corrupt: args.corrupt.as_deref() == Some(check.name.as_str()),
        };
        let worst = (check.run)(&ctx)?;
        let ok = worst < cfg.tolerance;
        println!(
            "{:<width$}  worst_rel_err {:<12}  {}",
            check.name,
            fmt_sig6(worst),
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(check.name.clone());
        }
    }
    println!(
        "{} checks, {} failed, tolerance {}",
        checks.len(),
        failed.len(),
        fmt_sig6(cfg.tolerance)
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "gradient check failed: {}",
            failed.join(", ")
        )))
    }
}
