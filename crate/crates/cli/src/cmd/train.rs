use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use percept_core::data::{split, to_range};
use percept_core::elvae::{reconstruct_mode, train_elvae_with, ElVae, ElVaeConfig};
use percept_core::losses::{LossFunction, LossKind};
use percept_core::nn::{
    train_autoencoder_with, Checkpoint, LayerSpec, ModelRole, Network, NnError, Shape, TrainConfig,
    TrainReport,
};
use percept_core::sr::{
    apply_model, crop_to_multiple, make_lr, train_sr, upscale_bicubic, SrModel,
};
use percept_core::util::fmt_sig6;
use percept_core::{Field, Image, PixelRange};
use serde::Serialize;

use super::{create_dir, write_text};
use crate::config::{ModelConfig, RunConfig, TrainingConfig};
use crate::error::CliError;
use crate::grid::save_grid;
use crate::Global;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config with model, loss, training and data blocks.
    #[arg(long)]
    pub config: PathBuf,
}

/// Values rounded to six significant digits for text artifacts.
fn r6(v: f64) -> f64 {
    fmt_sig6(v).parse().unwrap_or(v)
}

#[derive(Serialize)]
struct Summary {
    model: &'static str,
    train_images: usize,
    valid_images: usize,
    initial_train_loss: f64,
    final_train_loss: f64,
    initial_valid_metric: f64,
    best_valid_metric: f64,
    best_epoch: usize,
    stop_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_kl: Option<f64>,
}

impl Summary {
    fn new(model: &'static str, train: usize, valid: usize, r: &TrainReport) -> Self {
        Summary {
            model,
            train_images: train,
            valid_images: valid,
            initial_train_loss: r6(r.initial_train_loss),
            final_train_loss: r6(r.final_train_loss),
            initial_valid_metric: r6(r.initial_valid_metric),
            best_valid_metric: r6(r.best_valid_metric()),
            best_epoch: r.best_epoch,
            stop_epoch: r.stop_epoch,
            loss_scale: None,
            final_kl: None,
        }
    }
}

fn report_csv(r: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,valid_metric\n");
    let _ = writeln!(
        s,
        "0,{},{}",
        fmt_sig6(r.initial_train_loss),
        fmt_sig6(r.initial_valid_metric)
    );
    for e in &r.epochs {
        let _ = writeln!(
            s,
            "{},{},{}",
            e.epoch,
            fmt_sig6(e.train_loss),
            fmt_sig6(e.valid_metric)
        );
    }
    s
}

struct Paths {
    root: PathBuf,
    grids: PathBuf,
}

impl Paths {
    fn new(root: &Path) -> Result<Self, CliError> {
        let grids = root.join("grids");
        create_dir(&grids)?;
        Ok(Paths {
            root: root.to_path_buf(),
            grids,
        })
    }

    fn grid(&self, epoch: usize) -> PathBuf {
        self.grids.join(format!("epoch_{epoch:03}.png"))
    }

    fn finish(&self, ck: &Checkpoint, report: &str, summary: &Summary) -> Result<(), CliError> {
        ck.save(&self.root.join("checkpoint.json"))?;
        write_text(&self.root.join("train_report.csv"), report)?;
        let json = serde_json::to_string_pretty(summary).expect("plain data") + "\n";
        write_text(&self.root.join("summary.json"), &json)
    }
}

fn print_summary(s: &Summary, wall: f64) {
    println!(
        "{}: train loss {} -> {}, best epoch {} of {}, valid {} -> {}",
        s.model,
        fmt_sig6(s.initial_train_loss),
        fmt_sig6(s.final_train_loss),
        s.best_epoch,
        s.stop_epoch,
        fmt_sig6(s.initial_valid_metric),
        fmt_sig6(s.best_valid_metric)
    );
    eprintln!("wall time {}s", fmt_sig6(wall));
}

pub fn run(args: &TrainArgs, g: &Global) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(Some(&args.config), g.seed, g.out_dir.as_deref())?;
    cfg.validate_train()?;
    let model = cfg.model.as_ref().expect("validated");
    let training = cfg.training.as_ref().expect("validated");
    let range = match model {
        ModelConfig::SuperResolution { .. } => PixelRange::Unit,
        _ => cfg.pixel_range,
    };
    let loss = cfg.loss.as_ref().expect("validated").build(range)?;
    if range == PixelRange::Signed && matches!(loss.kind, LossKind::NegSsim | LossKind::NegMsSsim) {
        eprintln!(
            "warning: on the signed range SSIM also rewards the negated image; \
             unit-range data with a non-negative output is more reliable"
        );
    }
    let images: Vec<Field> = cfg.data()?.load()?.into_iter().map(|(_, f)| f).collect();
    if images.is_empty() {
        return Err(CliError::usage("the data source yielded no images"));
    }
    let tc = TrainConfig {
        init: training.init,
        optimizer: training.optimizer,
        stop: training.stop,
        seed: cfg.seed,
    };
    match model {
        ModelConfig::Autoencoder { layers } => {
            let (train, valid) = split_checked(&images, range, cfg.valid_fraction)?;
            let paths = Paths::new(cfg.out_dir()?)?;
            train_ae(
                layers, &loss, &train, &valid, &tc, training, &paths, range, cfg.seed,
            )
        }
        ModelConfig::Elvae {
            encoder,
            decoder,
            latent_dim,
            c,
            mc_samples,
            scale_pairs,
        } => {
            let (train, valid) = split_checked(&images, range, cfg.valid_fraction)?;
            let paths = Paths::new(cfg.out_dir()?)?;
            let ecfg = ElVaeConfig {
                c: *c,
                latent_dim: *latent_dim,
                mc_samples: *mc_samples,
                loss,
                scale_pairs: *scale_pairs,
            };
            let nets = (encoder.as_slice(), decoder.as_slice());
            train_vae(nets, &ecfg, &train, &valid, &tc, training, &paths, range)
        }
        ModelConfig::SuperResolution {
            layers,
            scale,
            steps,
            residual,
        } => {
            let paths = Paths::new(cfg.out_dir()?)?;
            let sr = SrRun {
                layers,
                scale: *scale,
                steps: *steps,
                residual: *residual,
            };
            train_sr_model(&sr, &loss, &images, &tc, training, &paths)
        }
    }
}

fn split_checked(
    images: &[Field],
    range: PixelRange,
    valid_fraction: f64,
) -> Result<(Vec<Field>, Vec<Field>), CliError> {
    let (train, valid) = split(to_range(images, range), 1.0 - valid_fraction);
    if train.is_empty() || valid.is_empty() {
        return Err(CliError::usage(format!(
            "{} images cannot be split into non-empty training and validation sets",
            images.len()
        )));
    }
    Ok((train, valid))
}

fn grid_subset(valid: &[Field], n: usize, range: PixelRange) -> Vec<Image> {
    valid
        .iter()
        .take(n)
        .map(|f| Image::clamped(f.clone(), range))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn train_ae(
    layers: &[LayerSpec],
    loss: &LossFunction,
    train: &[Field],
    valid: &[Field],
    tc: &TrainConfig,
    training: &TrainingConfig,
    paths: &Paths,
    range: PixelRange,
    seed: u64,
) -> Result<(), CliError> {
    let shown = grid_subset(valid, training.grid_images, range);
    let write = |epoch: usize, net: &Network| -> Result<(), NnError> {
        let recon = shown
            .iter()
            .map(|x| {
                let out = net.predict(x.pixels())?;
                Ok(Image::clamped(
                    Field::new(x.height(), x.width(), out)?,
                    range,
                ))
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(save_grid(&[shown.clone(), recon], &paths.grid(epoch))?)
    };
    let (h, w) = train[0].dims();
    write(
        0,
        &Network::new(layers, Shape::new(1, h, w), tc.init, tc.seed)?,
    )?;
    let (net, report) =
        train_autoencoder_with(layers, loss, train, valid, tc, &mut |e, n| write(e, n))?;
    let mut ck = Checkpoint::new(ModelRole::Autoencoder, &[("autoencoder", &net)], seed);
    ck.loss = Some(loss.clone());
    ck.pixel_range = Some(range);
    let summary = Summary::new("autoencoder", train.len(), valid.len(), &report);
    paths.finish(&ck, &report_csv(&report), &summary)?;
    print_summary(&summary, report.wall_seconds);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_vae(
    (encoder, decoder): (&[LayerSpec], &[LayerSpec]),
    ecfg: &ElVaeConfig,
    train: &[Field],
    valid: &[Field],
    tc: &TrainConfig,
    training: &TrainingConfig,
    paths: &Paths,
    range: PixelRange,
) -> Result<(), CliError> {
    let shown = grid_subset(valid, training.grid_images, range);
    let write = |epoch: usize, m: &ElVae| -> Result<(), NnError> {
        let recon = shown
            .iter()
            .map(|x| reconstruct_mode(m, x))
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(save_grid(&[shown.clone(), recon], &paths.grid(epoch))?)
    };
    let dims = train[0].dims();
    write(
        0,
        &ElVae::new(encoder, decoder, dims, ecfg.latent_dim, tc.init, tc.seed)?,
    )?;
    let run = train_elvae_with(encoder, decoder, ecfg, train, valid, tc, &mut |e, m| {
        write(e, m)
    })?;
    let mut ck = run.model.to_checkpoint(ecfg.c, tc.seed);
    ck.loss = Some(ecfg.loss.clone().with_scale(run.loss_scale)?);
    ck.pixel_range = Some(range);
    let mut summary = Summary::new("elvae", train.len(), valid.len(), &run.report);
    summary.loss_scale = Some(r6(run.loss_scale));
    summary.final_kl = Some(r6(run.final_kl));
    paths.finish(&ck, &report_csv(&run.report), &summary)?;
    print_summary(&summary, run.report.wall_seconds);
    Ok(())
}

struct SrRun<'a> {
    layers: &'a [LayerSpec],
    scale: usize,
    steps: usize,
    residual: bool,
}

fn train_sr_model(
    sr: &SrRun,
    loss: &LossFunction,
    images: &[Field],
    tc: &TrainConfig,
    training: &TrainingConfig,
    paths: &Paths,
) -> Result<(), CliError> {
    let hr: Vec<Image> = images
        .iter()
        .map(|f| crop_to_multiple(&Image::clamped(f.clone(), PixelRange::Unit), sr.scale))
        .collect::<Result<_, _>>()?;
    let (h, w) = hr[0].dims();
    let mut model = SrModel {
        net: Network::new(sr.layers, Shape::new(1, h, w), tc.init, tc.seed)?,
        residual: sr.residual,
    };
    let history = train_sr(
        &mut model,
        loss,
        &hr,
        sr.scale,
        sr.steps,
        &tc.optimizer,
        tc.seed,
    )?;
    let mut report = String::from("step,loss\n");
    for (i, v) in history.iter().enumerate() {
        let _ = writeln!(report, "{},{}", i + 1, fmt_sig6(*v));
    }
    let mut ck = model.to_checkpoint(sr.scale, tc.seed);
    ck.loss = Some(loss.clone());
    ck.pixel_range = Some(PixelRange::Unit);
    ck.save(&paths.root.join("checkpoint.json"))?;
    write_text(&paths.root.join("train_report.csv"), &report)?;

    let mut rows = vec![Vec::new(), Vec::new(), Vec::new()];
    for img in hr.iter().take(training.grid_images) {
        let lr = make_lr(img, sr.scale)?;
        rows[0].push(img.clone());
        rows[1].push(upscale_bicubic(&lr, sr.scale)?);
        rows[2].push(apply_model(&lr, &model, sr.scale)?);
    }
    save_grid(&rows, &paths.grids.join("final.png"))?;
    let (first, last) = (history.first().copied(), history.last().copied());
    println!(
        "super_resolution: {} steps, batch loss {} -> {}",
        sr.steps,
        first.map_or("n/a".into(), fmt_sig6),
        last.map_or("n/a".into(), fmt_sig6)
    );
    Ok(())
}
