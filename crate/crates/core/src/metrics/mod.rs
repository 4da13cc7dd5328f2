//! SSIM and MS-SSIM with exact pixelwise gradients.
//!
//! Statistics are taken over a uniform `window_size x window_size`
//! neighbourhood at every valid centre (no padding) and the per-window scores
//! are averaged. `sigma_xy` is the window covariance with the biased
//! (divide-by-N) estimator. Gradients are with respect to the second
//! argument.

mod fd;
mod ms_ssim;
mod ssim;
mod window;

pub use fd::{fd_gradient, fd_gradient_at, max_relative_error};
pub use ms_ssim::{max_scales, ms_ssim, ms_ssim_grad};
pub use ssim::{ssim, ssim_grad};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Field, ImageError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    TooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("{requested} scales requested but at most {max_feasible} fit a {height}x{width} image")]
    TooFewScales {
        requested: usize,
        max_feasible: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
    #[error("window at ({row}, {col}) does not fit inside a {height}x{width} image")]
    WindowOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("negative base {base} raised to fractional exponent {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
}

/// Constants, window and exponents for the SSIM family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricParams {
    pub window_size: usize,
    pub k1: f64,
    pub k2: f64,
    /// `L`, the span of the pixel range.
    pub dynamic_range: f64,
    /// Luminance exponent, applied at the coarsest scale only.
    pub alpha: f64,
    /// Contrast exponent per scale, finest first.
    pub beta: Vec<f64>,
    /// Structure exponent per scale, finest first.
    pub gamma: Vec<f64>,
    pub scales: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self::ssim_default()
    }
}

impl MetricParams {
    /// 11x11 window, `K1 = 0.01`, `K2 = 0.03`, `L = 1`, unit exponents, `M = 1`.
    pub fn ssim_default() -> Self {
        MetricParams {
            window_size: 11,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
            alpha: 1.0,
            beta: vec![1.0],
            gamma: vec![1.0],
            scales: 1,
        }
    }

    /// As [`ssim_default`](Self::ssim_default) with `M = 5`.
    pub fn ms_ssim_default() -> Self {
        Self::ssim_default().with_scales(5)
    }

    /// Sets `M`, resizing the exponent arrays with unit entries.
    pub fn with_scales(mut self, m: usize) -> Self {
        self.scales = m;
        self.beta.resize(m, 1.0);
        self.gamma.resize(m, 1.0);
        self
    }

    pub fn with_window(mut self, window_size: usize) -> Self {
        self.window_size = window_size;
        self
    }

    pub fn with_dynamic_range(mut self, l: f64) -> Self {
        self.dynamic_range = l;
        self
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: &str| Err(MetricError::InvalidParams(m.to_string()));
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return bad("window_size must be odd and at least 3");
        }
        if self.scales == 0 {
            return bad("scales must be at least 1");
        }
        if self.beta.len() != self.scales || self.gamma.len() != self.scales {
            return bad("beta and gamma must have one entry per scale");
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return bad("k1, k2 and dynamic_range must be positive");
        }
        let exps = std::iter::once(&self.alpha).chain(&self.beta).chain(&self.gamma);
        if exps.clone().any(|e| !e.is_finite()) {
            return bad("exponents must be finite");
        }
        Ok(())
    }
}

/// Window statistics at one centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_xy: f64,
}

/// Statistics of the window centred at `(row, col)`.
pub fn local_stats(
    x: &Field,
    y: &Field,
    center: (usize, usize),
    params: &MetricParams,
) -> Result<LocalStats, MetricError> {
    params.validate()?;
    x.same_dims(y)?;
    let (h, w) = x.dims();
    let r = params.window_size / 2;
    let (row, col) = center;
    if row < r || col < r || row + r >= h || col + r >= w {
        return Err(MetricError::WindowOutOfBounds {
            row,
            col,
            height: h,
            width: w,
        });
    }
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in row - r..=row + r {
        for j in col - r..=col + r {
            let (a, b) = (x.get(i, j), y.get(i, j));
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let n = (params.window_size * params.window_size) as f64;
    let (mu_x, mu_y) = (sx / n, sy / n);
    Ok(LocalStats {
        mu_x,
        mu_y,
        sigma_x: (sxx / n - mu_x * mu_x).max(0.0).sqrt(),
        sigma_y: (syy / n - mu_y * mu_y).max(0.0).sqrt(),
        sigma_xy: sxy / n - mu_x * mu_y,
    })
}

/// Luminance, contrast and structure comparisons `(I, C, S)`.
pub fn ssim_components(s: &LocalStats, params: &MetricParams) -> (f64, f64, f64) {
    let (c1, c2, c3) = (params.c1(), params.c2(), params.c3());
    let i = (2.0 * s.mu_x * s.mu_y + c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1);
    let c = (2.0 * s.sigma_x * s.sigma_y + c2) / (s.sigma_x.powi(2) + s.sigma_y.powi(2) + c2);
    let st = (s.sigma_xy + c3) / (s.sigma_x * s.sigma_y + c3);
    (i, c, st)
}

/// Score and, when requested, `d score / d y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub value: f64,
    pub gradient: Option<Field>,
}

/// Metrics addressable by name from the CLI and the FD harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "ssim")]
    Ssim,
    #[serde(rename = "ms-ssim")]
    MsSsim,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Mse,
        MetricKind::Mae,
        MetricKind::Ssim,
        MetricKind::MsSsim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::Mae => "mae",
            MetricKind::Ssim => "ssim",
            MetricKind::MsSsim => "ms-ssim",
        }
    }

    pub fn value(self, x: &Field, y: &Field, params: &MetricParams) -> Result<f64, MetricError> {
        Ok(match self {
            MetricKind::Mse => crate::losses::mse(x, y)?.0,
            MetricKind::Mae => crate::losses::mae(x, y)?.0,
            MetricKind::Ssim => ssim(x, y, params)?.value,
            MetricKind::MsSsim => ms_ssim(x, y, params)?.value,
        })
    }

    pub fn value_and_grad(
        self,
        x: &Field,
        y: &Field,
        params: &MetricParams,
    ) -> Result<(f64, Field), MetricError> {
        let r = match self {
            MetricKind::Mse => return Ok(crate::losses::mse(x, y)?),
            MetricKind::Mae => return Ok(crate::losses::mae(x, y)?),
            MetricKind::Ssim => ssim_grad(x, y, params)?,
            MetricKind::MsSsim => ms_ssim_grad(x, y, params)?,
        };
        Ok((r.value, r.gradient.expect("gradient requested")))
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// `base^e` and its derivative, refusing negative bases with fractional
/// exponents.
pub(crate) fn pow_d(base: f64, e: f64) -> Result<(f64, f64), MetricError> {
    if e == 1.0 {
        return Ok((base, 1.0));
    }
    if base < 0.0 && e.fract() != 0.0 {
        return Err(MetricError::NegativeBase { base, exponent: e });
    }
    if e == 0.0 {
        return Ok((1.0, 0.0));
    }
    Ok((base.powf(e), e * base.powf(e - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::test_support::random_field;

    #[test]
    fn default_constants() {
        let p = MetricParams::ssim_default();
        assert_eq!(p.window_size, 11);
        assert!((p.c1() - 1e-4).abs() < 1e-18);
        assert!((p.c2() - 9e-4).abs() < 1e-18);
        assert!((p.c3() - 4.5e-4).abs() < 1e-18);
        let m = MetricParams::ms_ssim_default();
        assert_eq!((m.scales, m.beta.len(), m.gamma.len()), (5, 5, 5));
    }

    #[test]
    fn validate_rejects_even_window_and_ragged_exponents() {
        assert!(MetricParams::ssim_default().with_window(10).validate().is_err());
        let mut p = MetricParams::ssim_default();
        p.beta.push(1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn constant_window_stats() {
        let x = Field::filled(11, 11, 0.3);
        let s = local_stats(&x, &x, (5, 5), &MetricParams::ssim_default()).unwrap();
        assert!((s.mu_x - 0.3).abs() < 1e-15 && (s.mu_y - 0.3).abs() < 1e-15);
        assert!(s.sigma_x < 1e-7 && s.sigma_y < 1e-7 && s.sigma_xy.abs() < 1e-14);
    }

    #[test]
    fn complement_window_stats() {
        let x = random_field(13, 13, 4);
        let y = x.map(|v| 1.0 - v);
        let s = local_stats(&x, &y, (6, 6), &MetricParams::ssim_default()).unwrap();
        assert!((s.mu_y - (1.0 - s.mu_x)).abs() < 1e-12);
        assert!((s.sigma_xy + s.sigma_x * s.sigma_x).abs() < 1e-12);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let x = random_field(15, 15, 1);
        let y = random_field(15, 15, 2);
        let (row, col) = (7, 8);
        let s = local_stats(&x, &y, (row, col), &MetricParams::ssim_default()).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in row - 5..=row + 5 {
            for j in col - 5..=col + 5 {
                xs.push(x.get(i, j));
                ys.push(y.get(i, j));
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let vx = xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
        let vy = ys.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
        let cxy = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        assert!((s.mu_x - mx).abs() < 1e-12);
        assert!((s.mu_y - my).abs() < 1e-12);
        assert!((s.sigma_x - vx.sqrt()).abs() < 1e-12);
        assert!((s.sigma_y - vy.sqrt()).abs() < 1e-12);
        assert!((s.sigma_xy - cxy).abs() < 1e-12);
        assert!(s.sigma_xy.abs() <= s.sigma_x * s.sigma_y + 1e-9);
    }

    #[test]
    fn stats_errors() {
        let p = MetricParams::ssim_default();
        let x = Field::zeros(11, 11);
        assert!(matches!(
            local_stats(&x, &x, (4, 5), &p),
            Err(MetricError::WindowOutOfBounds { .. })
        ));
        assert!(matches!(
            local_stats(&x, &Field::zeros(11, 12), (5, 5), &p),
            Err(MetricError::Image(ImageError::DimensionMismatch(..)))
        ));
    }

    #[test]
    fn component_values() {
        let p = MetricParams::ssim_default();
        let same = LocalStats {
            mu_x: 0.4,
            mu_y: 0.4,
            sigma_x: 0.1,
            sigma_y: 0.1,
            sigma_xy: 0.01,
        };
        let (i, c, s) = ssim_components(&same, &p);
        assert!((i - 1.0).abs() < 1e-15 && (c - 1.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);

        // mu_x = 0.5, mu_y = -0.5: I = (-0.5 + 1e-4) / (0.5 + 1e-4)
        let opp = LocalStats {
            mu_y: -0.5,
            mu_x: 0.5,
            ..same
        };
        let (i, _, _) = ssim_components(&opp, &p);
        assert!((i - (-0.5 + 1e-4) / (0.5 + 1e-4)).abs() < 1e-15);
        assert!((i + 1.0).abs() < 1e-3);

        // sigma_y = 2 sigma_x with sigma >> sqrt(C2): C -> 4/5
        let wide = LocalStats {
            sigma_x: 10.0,
            sigma_y: 20.0,
            ..same
        };
        let (_, c, _) = ssim_components(&wide, &p);
        assert!((c - 0.8).abs() < 1e-5);
    }

    #[test]
    fn pow_d_guards_negative_fractional() {
        assert!(pow_d(-0.5, 0.5).is_err());
        assert_eq!(pow_d(-0.5, 1.0).unwrap(), (-0.5, 1.0));
        assert_eq!(pow_d(-0.5, 2.0).unwrap().0, 0.25);
    }
}
