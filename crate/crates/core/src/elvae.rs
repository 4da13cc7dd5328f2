//! Variational autoencoder whose reconstruction term is the expectation of an
//! arbitrary image loss under a diagonal-Gaussian posterior.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::image::{Field, Image, PixelRange};
use crate::losses::{estimate_loss_scale, LossFunction, DEFAULT_SCALE_PAIRS};
use crate::nn::{
    common_dims, fit, Checkpoint, Init, LayerSpec, Mode, ModelRole, Network, NnError, Objective,
    Shape, TrainConfig, TrainReport,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianPosterior {
    /// Splits an encoder output `[mu; log_var]`.
    pub fn from_encoder_output(out: &[f64]) -> Result<Self, NnError> {
        if !out.len().is_multiple_of(2) || out.is_empty() {
            return Err(NnError::LengthMismatch {
                what: "encoder output",
                expected: 2 * (out.len() / 2).max(1),
                got: out.len(),
            });
        }
        let d = out.len() / 2;
        Ok(GaussianPosterior {
            mu: out[..d].to_vec(),
            log_var: out[d..].to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check(&self) -> Result<(), NnError> {
        if self.mu.len() != self.log_var.len() {
            return Err(NnError::LengthMismatch {
                what: "log_var",
                expected: self.mu.len(),
                got: self.log_var.len(),
            });
        }
        if self.mu.iter().chain(&self.log_var).any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteValue("posterior"));
        }
        Ok(())
    }
}

/// `KL(q || N(0, I))` and its gradients with respect to `mu` and `log_var`.
pub fn kl_standard_normal(q: &GaussianPosterior) -> Result<(f64, Vec<f64>, Vec<f64>), NnError> {
    q.check()?;
    let value = 0.5
        * q.mu
            .iter()
            .zip(&q.log_var)
            .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
            .sum::<f64>();
    let g_lv = q.log_var.iter().map(|lv| 0.5 * (lv.exp() - 1.0)).collect();
    Ok((value, q.mu.clone(), g_lv))
}

/// Monte-Carlo estimate of the same KL: the mean of `log q(z) - log p(z)`
/// over `n` reparameterised draws.
pub fn kl_monte_carlo(q: &GaussianPosterior, n: usize, seed: u64) -> Result<f64, NnError> {
    q.check()?;
    let mut r = rng::stream(seed, "kl-mc");
    let mut total = 0.0;
    let mut eps = vec![0.0; q.dim()];
    for _ in 0..n {
        eps.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut r));
        let z = reparameterize(q, &eps)?;
        // The 2*pi terms cancel.
        total += z
            .iter()
            .zip(&eps)
            .zip(&q.log_var)
            .map(|((z, e), lv)| 0.5 * (z * z - e * e - lv))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}

/// `z = mu + exp(log_var / 2) * eps`.
pub fn reparameterize(q: &GaussianPosterior, eps: &[f64]) -> Result<Vec<f64>, NnError> {
    if eps.len() != q.dim() {
        return Err(NnError::LengthMismatch {
            what: "eps",
            expected: q.dim(),
            got: eps.len(),
        });
    }
    Ok(q.mu
        .iter()
        .zip(&q.log_var)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

fn default_c() -> f64 {
    1000.0
}
fn default_samples() -> usize {
    1
}
fn default_scale_pairs() -> usize {
    DEFAULT_SCALE_PAIRS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElVaeConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    pub latent_dim: usize,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
    pub loss: LossFunction,
    /// Random training pairs used to estimate the loss scale before
    /// training. 0 keeps `loss.scale` as given.
    #[serde(default = "default_scale_pairs")]
    pub scale_pairs: usize,
}

impl ElVaeConfig {
    pub fn new(c: f64, latent_dim: usize, loss: LossFunction) -> Self {
        ElVaeConfig {
            c,
            latent_dim,
            mc_samples: 1,
            loss,
            scale_pairs: DEFAULT_SCALE_PAIRS,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(NnError::InvalidConfig(format!("C must be non-negative, got {}", self.c)));
        }
        if self.latent_dim == 0 || self.mc_samples == 0 {
            return Err(NnError::InvalidConfig(
                "latent_dim and mc_samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder emitting `[mu; log_var]` and a decoder from the latent space to
/// an image.
#[derive(Debug, Clone, PartialEq)]
pub struct ElVae {
    pub encoder: Network,
    pub decoder: Network,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `recon + kl`.
    pub value: f64,
    /// `C / S * sum_s loss(x, x_s) / scale`.
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElVaeGradients {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl ElVae {
    pub fn new(
        encoder: &[LayerSpec],
        decoder: &[LayerSpec],
        image: (usize, usize),
        latent_dim: usize,
        init: Init,
        seed: u64,
    ) -> Result<Self, NnError> {
        let enc = Network::new(encoder, Shape::new(1, image.0, image.1), init, seed)?;
        let dec_seed = rng::stream(seed, "decoder-init").random::<u64>();
        let dec = Network::new(decoder, Shape::flat(latent_dim), init, dec_seed)?;
        ElVae::from_networks(enc, dec)
    }

    pub fn from_networks(encoder: Network, decoder: Network) -> Result<Self, NnError> {
        let d = decoder.input_shape().len();
        if encoder.output_shape().len() != 2 * d {
            return Err(NnError::InvalidConfig(format!(
                "encoder emits {} values; a {d}-dimensional latent needs {}",
                encoder.output_shape().len(),
                2 * d
            )));
        }
        let inp = encoder.input_shape();
        if inp.channels != 1 || decoder.output_shape().len() != inp.len() {
            return Err(NnError::InvalidConfig(format!(
                "decoder output {} does not match encoder input {inp}",
                decoder.output_shape()
            )));
        }
        Ok(ElVae { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_shape().len()
    }

    pub fn image_dims(&self) -> (usize, usize) {
        let s = self.encoder.input_shape();
        (s.height, s.width)
    }

    pub fn posterior(&self, x: &Field) -> Result<GaussianPosterior, NnError> {
        GaussianPosterior::from_encoder_output(&self.encoder.predict(x.data())?)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Field, NnError> {
        let (h, w) = self.image_dims();
        Ok(Field::new(h, w, self.decoder.predict(z)?)?)
    }

    pub fn to_checkpoint(&self, c: f64, seed: u64) -> Checkpoint {
        Checkpoint::new(
            ModelRole::Elvae {
                latent_dim: self.latent_dim(),
                c,
            },
            &[("encoder", &self.encoder), ("decoder", &self.decoder)],
            seed,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        match ck.model {
            ModelRole::Elvae { latent_dim, .. } => {
                let m = ElVae::from_networks(ck.network("encoder")?, ck.network("decoder")?)?;
                if m.latent_dim() != latent_dim {
                    return Err(NnError::Checkpoint(format!(
                        "header says latent_dim {latent_dim}, decoder takes {}",
                        m.latent_dim()
                    )));
                }
                Ok(m)
            }
            ref other => Err(NnError::Checkpoint(format!(
                "expected an EL-VAE checkpoint, found {other:?}"
            ))),
        }
    }
}

/// Standard-normal draws for `samples` latent codes of dimension `d`.
pub fn draw_eps(seed: u64, samples: usize, d: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "elvae-eps");
    (0..samples)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect()
}

/// The objective and all parameter gradients for one image, with the
/// reparameterisation noise drawn from `seed`.
pub fn elvae_loss(
    x: &Field,
    model: &ElVae,
    cfg: &ElVaeConfig,
    seed: u64,
) -> Result<(LossBreakdown, ElVaeGradients), NnError> {
    let eps = draw_eps(seed, cfg.mc_samples, model.latent_dim());
    elvae_loss_with_noise(x, model, cfg, &eps)
}

/// [`elvae_loss`] with explicit noise, one vector per Monte-Carlo sample.
pub fn elvae_loss_with_noise(
    x: &Field,
    model: &ElVae,
    cfg: &ElVaeConfig,
    eps: &[Vec<f64>],
) -> Result<(LossBreakdown, ElVaeGradients), NnError> {
    if eps.is_empty() {
        return Err(NnError::InvalidConfig("need at least one noise sample".into()));
    }
    let d = model.latent_dim();
    let (enc_out, enc_tape) = model.encoder.forward(x.data(), Mode::Train)?;
    let q = GaussianPosterior::from_encoder_output(&enc_out)?;
    let (kl, mut g_mu, mut g_lv) = kl_standard_normal(&q)?;
    let k = cfg.c / (eps.len() as f64 * cfg.loss.scale);
    let mut recon = 0.0;
    let mut g_dec = vec![0.0; model.decoder.num_params()];
    for e in eps {
        let z = reparameterize(&q, e)?;
        let (out, tape) = model.decoder.forward(&z, Mode::Train)?;
        let xhat = Field::new(x.height(), x.width(), out)?;
        let (v, mut g) = cfg.loss.value_and_grad(x, &xhat)?;
        recon += k * v;
        g.scale(k);
        let back = model.decoder.backward(&tape, g.data())?;
        g_dec.iter_mut().zip(&back.params).for_each(|(a, b)| *a += b);
        for i in 0..d {
            let dz = back.input[i];
            g_mu[i] += dz;
            g_lv[i] += dz * 0.5 * (0.5 * q.log_var[i]).exp() * e[i];
        }
    }
    g_mu.extend(g_lv);
    let g_enc = model.encoder.backward(&enc_tape, &g_mu)?.params;
    Ok((
        LossBreakdown {
            value: recon + kl,
            recon,
            kl,
        },
        ElVaeGradients {
            encoder: g_enc,
            decoder: g_dec,
        },
    ))
}

struct Trainer<'a> {
    model: ElVae,
    cfg: &'a ElVaeConfig,
    train: &'a [Field],
    valid: &'a [Field],
    seed: u64,
}

impl Trainer<'_> {
    /// Mean objective with noise fixed per image, so the metric is a
    /// deterministic function of the parameters.
    fn mean_objective(&self, set: &[Field], stream: &str) -> Result<(f64, f64), NnError> {
        let mut total = 0.0;
        let mut kl = 0.0;
        for (i, x) in set.iter().enumerate() {
            let s = rng::substream(self.seed, stream, i as u64).random::<u64>();
            let (b, _) = elvae_loss(x, &self.model, self.cfg, s)?;
            total += b.value;
            kl += b.kl;
        }
        let n = set.len() as f64;
        Ok((total / n, kl / n))
    }
}

impl Objective for Trainer<'_> {
    fn params(&self) -> Vec<f64> {
        let mut p = self.model.encoder.params().to_vec();
        p.extend_from_slice(self.model.decoder.params());
        p
    }

    fn set_params(&mut self, p: &[f64]) -> Result<(), NnError> {
        let n = self.model.encoder.num_params();
        self.model.encoder.set_params(&p[..n])?;
        self.model.decoder.set_params(&p[n..])
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn batch(&self, idx: &[usize], step: u64) -> Result<(f64, Vec<f64>), NnError> {
        let ne = self.model.encoder.num_params();
        let mut grad = vec![0.0; ne + self.model.decoder.num_params()];
        let mut total = 0.0;
        let k = 1.0 / idx.len() as f64;
        let mut r = rng::substream(self.seed, "elvae-step", step);
        for &i in idx {
            let (b, g) = elvae_loss(&self.train[i], &self.model, self.cfg, r.random::<u64>())?;
            total += b.value;
            grad[..ne].iter_mut().zip(&g.encoder).for_each(|(a, v)| *a += k * v);
            grad[ne..].iter_mut().zip(&g.decoder).for_each(|(a, v)| *a += k * v);
        }
        Ok((total * k, grad))
    }

    fn train_metric(&self) -> Result<f64, NnError> {
        Ok(self.mean_objective(self.train, "elvae-train-eval")?.0)
    }

    fn valid_metric(&self) -> Result<f64, NnError> {
        Ok(self.mean_objective(self.valid, "elvae-valid-eval")?.0)
    }
}

#[derive(Debug, Clone)]
pub struct ElVaeRun {
    pub model: ElVae,
    pub report: TrainReport,
    /// The frozen loss scale the objective was normalised by.
    pub loss_scale: f64,
    /// Mean KL over the training set at the returned parameters.
    pub final_kl: f64,
}

pub fn train_elvae(
    encoder: &[LayerSpec],
    decoder: &[LayerSpec],
    cfg: &ElVaeConfig,
    train: &[Field],
    valid: &[Field],
    tc: &TrainConfig,
) -> Result<ElVaeRun, NnError> {
    train_elvae_with(encoder, decoder, cfg, train, valid, tc, &mut |_, _| Ok(()))
}

/// [`train_elvae`] with a hook called after every epoch's validation.
pub fn train_elvae_with(
    encoder: &[LayerSpec],
    decoder: &[LayerSpec],
    cfg: &ElVaeConfig,
    train: &[Field],
    valid: &[Field],
    tc: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ElVae) -> Result<(), NnError>,
) -> Result<ElVaeRun, NnError> {
    cfg.validate()?;
    let dims = common_dims(&[train, valid])?;
    let mut cfg = cfg.clone();
    if cfg.scale_pairs > 0 {
        let s = estimate_loss_scale(&cfg.loss, train, cfg.scale_pairs, tc.seed)?;
        cfg.loss = cfg.loss.with_scale(s)?;
    }
    let model = ElVae::new(encoder, decoder, dims, cfg.latent_dim, tc.init, tc.seed)?;
    let mut t = Trainer {
        model,
        cfg: &cfg,
        train,
        valid,
        seed: tc.seed,
    };
    let report = fit(&mut t, &tc.optimizer, &tc.stop, tc.seed, &mut |e, t| {
        on_epoch(e, &t.model)
    })?;
    let final_kl = t.mean_objective(train, "elvae-train-eval")?.1;
    Ok(ElVaeRun {
        model: t.model,
        report,
        loss_scale: cfg.loss.scale,
        final_kl,
    })
}

/// `decode(mu(x))`, clipped to `x`'s range.
pub fn reconstruct_mode(model: &ElVae, x: &Image) -> Result<Image, NnError> {
    let q = model.posterior(x.field())?;
    Ok(Image::clamped(model.decode(&q.mu)?, x.range()))
}

/// `n` decoded draws from the prior, clipped to `range`.
pub fn sample_prior(
    decoder: &Network,
    image: (usize, usize),
    n: usize,
    seed: u64,
    range: PixelRange,
) -> Result<Vec<Image>, NnError> {
    let d = decoder.input_shape().len();
    if decoder.output_shape().len() != image.0 * image.1 {
        return Err(NnError::InvalidConfig(format!(
            "decoder output {} is not a {}x{} image",
            decoder.output_shape(),
            image.0,
            image.1
        )));
    }
    let mut r = rng::stream(seed, "prior");
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let f = Field::new(image.0, image.1, decoder.predict(&z)?)?;
            Ok(Image::clamped(f, range))
        })
        .collect()
}
