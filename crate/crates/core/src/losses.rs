//! Pixel losses, PSNR and the (normalised) training losses.
//!
//! MSE and MAE are means over pixels. The SSIM-family losses are the negated
//! scores, so every loss is minimised. Gradients are with respect to the
//! second argument, the reconstruction.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Field, ImageError};
use crate::metrics::{ms_ssim, ms_ssim_grad, ssim, ssim_grad, MetricError, MetricParams};
use crate::rng;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("batch lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("expected loss over random pairs is {0}; cannot normalise by it")]
    DegenerateScale(f64),
    #[error("loss scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

impl From<ImageError> for LossError {
    fn from(e: ImageError) -> Self {
        LossError::Metric(e.into())
    }
}

pub fn mse(x: &Field, y: &Field) -> Result<(f64, Field), ImageError> {
    x.same_dims(y)?;
    let n = x.len() as f64;
    let value = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / n;
    Ok((value, x.zip_map(y, |a, b| 2.0 * (b - a) / n)))
}

/// Mean absolute error; the subgradient uses `sign(0) = 0`.
pub fn mae(x: &Field, y: &Field) -> Result<(f64, Field), ImageError> {
    x.same_dims(y)?;
    let n = x.len() as f64;
    let value = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (b - a).abs())
        .sum::<f64>()
        / n;
    let sign = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    Ok((value, x.zip_map(y, |a, b| sign(b - a) / n)))
}

/// PSNR in dB. Identical inputs have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => f.write_str(&crate::util::fmt_sig6(*v)),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

/// `10 log10(L^2 / mse)`.
pub fn psnr(x: &Field, y: &Field, dynamic_range: f64) -> Result<Psnr, ImageError> {
    let (m, _) = mse(x, y)?;
    if m == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(10.0 * (dynamic_range * dynamic_range / m).log10()))
}

/// Loss identifiers as they appear in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "mae")]
    Mae,
    /// Negated SSIM.
    #[serde(rename = "ssim")]
    NegSsim,
    /// Negated MS-SSIM.
    #[serde(rename = "ms-ssim")]
    NegMsSsim,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Mse,
        LossKind::Mae,
        LossKind::NegSsim,
        LossKind::NegMsSsim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::NegSsim => "ssim",
            LossKind::NegMsSsim => "ms-ssim",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown loss {s:?}"))
    }
}

/// A loss identifier with its metric parameters and normalising divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFunction {
    pub kind: LossKind,
    pub params: MetricParams,
    pub scale: f64,
}

impl LossFunction {
    pub fn new(kind: LossKind, params: MetricParams) -> Self {
        LossFunction {
            kind,
            params,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self, LossError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LossError::InvalidScale(scale));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Unscaled loss for one pair.
    pub fn value(&self, x: &Field, y: &Field) -> Result<f64, LossError> {
        Ok(match self.kind {
            LossKind::Mse => mse(x, y)?.0,
            LossKind::Mae => mae(x, y)?.0,
            LossKind::NegSsim => -ssim(x, y, &self.params)?.value,
            LossKind::NegMsSsim => -ms_ssim(x, y, &self.params)?.value,
        })
    }

    /// Unscaled loss and gradient for one pair.
    pub fn value_and_grad(&self, x: &Field, y: &Field) -> Result<(f64, Field), LossError> {
        let negate = |r: crate::metrics::MetricResult| {
            let mut g = r.gradient.expect("gradient requested");
            g.scale(-1.0);
            (-r.value, g)
        };
        Ok(match self.kind {
            LossKind::Mse => mse(x, y)?,
            LossKind::Mae => mae(x, y)?,
            LossKind::NegSsim => negate(ssim_grad(x, y, &self.params)?),
            LossKind::NegMsSsim => negate(ms_ssim_grad(x, y, &self.params)?),
        })
    }
}

/// `sum_i loss(X_i, Y_i) / scale` and the per-pair gradients, also divided by
/// `scale`.
pub fn batch_loss(
    loss: &LossFunction,
    xs: &[Field],
    ys: &[Field],
) -> Result<(f64, Vec<Field>), LossError> {
    if xs.len() != ys.len() {
        return Err(LossError::LengthMismatch(xs.len(), ys.len()));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(ys) {
        let (v, mut g) = loss.value_and_grad(x, y)?;
        total += v;
        g.scale(1.0 / loss.scale);
        grads.push(g);
    }
    Ok((total / loss.scale, grads))
}

/// Default number of random pairs for [`estimate_loss_scale`].
pub const DEFAULT_SCALE_PAIRS: usize = 10_000;

/// Mean unscaled loss over `n_pairs` pairs drawn independently, with
/// replacement, from `dataset`. The absolute value is returned so negated
/// similarity losses still give a positive divisor.
pub fn estimate_loss_scale(
    loss: &LossFunction,
    dataset: &[Field],
    n_pairs: usize,
    seed: u64,
) -> Result<f64, LossError> {
    if dataset.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    assert!(n_pairs > 0, "n_pairs must be positive");
    let mut r = rng::stream(seed, "loss-scale");
    let n = dataset.len();
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let i = r.random_range(0..n);
        let j = r.random_range(0..n);
        total += loss.value(&dataset[i], &dataset[j])?;
    }
    let mean = (total / n_pairs as f64).abs();
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(LossError::DegenerateScale(mean));
    }
    Ok(mean)
}
