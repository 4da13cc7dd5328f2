use super::window::{box_sum, box_sum_adjoint};
use super::{pow_d, MetricError, MetricParams, MetricResult};
use crate::image::Field;

/// Window moments over the valid region, in raw-moment form.
pub(crate) struct ScaleStats {
    pub n_windows: usize,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub var_x: Vec<f64>,
    pub var_y: Vec<f64>,
    pub cov: Vec<f64>,
}

pub(crate) fn scale_stats(x: &Field, y: &Field, win: usize) -> ScaleStats {
    let (h, w) = x.dims();
    let n = (win * win) as f64;
    let (xd, yd) = (x.data(), y.data());
    let xx: Vec<f64> = xd.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = yd.iter().map(|b| b * b).collect();
    let xy: Vec<f64> = xd.iter().zip(yd).map(|(a, b)| a * b).collect();
    let mean = |f: &[f64]| -> Vec<f64> { box_sum(f, h, w, win).into_iter().map(|s| s / n).collect() };
    let mu_x = mean(xd);
    let mu_y = mean(yd);
    let (exx, eyy, exy) = (mean(&xx), mean(&yy), mean(&xy));
    let k = mu_x.len();
    let mut var_x = Vec::with_capacity(k);
    let mut var_y = Vec::with_capacity(k);
    let mut cov = Vec::with_capacity(k);
    for i in 0..k {
        var_x.push((exx[i] - mu_x[i] * mu_x[i]).max(0.0));
        var_y.push((eyy[i] - mu_y[i] * mu_y[i]).max(0.0));
        cov.push(exy[i] - mu_x[i] * mu_y[i]);
    }
    ScaleStats {
        n_windows: k,
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

/// Partials of an aggregated score with respect to each window's
/// `(mu_y, var_y, cov)`.
pub(crate) struct StatGrads {
    pub d_mu: Vec<f64>,
    pub d_var: Vec<f64>,
    pub d_cov: Vec<f64>,
}

impl StatGrads {
    fn with_capacity(k: usize) -> Self {
        StatGrads {
            d_mu: Vec::with_capacity(k),
            d_var: Vec::with_capacity(k),
            d_cov: Vec::with_capacity(k),
        }
    }
}

/// Chain rule from window statistics to pixels of `y`:
///
/// `d mu_y / d y_q = 1/N`, `d var_y / d y_q = 2 (y_q - mu_y) / N`,
/// `d cov / d y_q = (x_q - mu_x) / N`, summed over every window holding `q`.
pub(crate) fn backprop_stats(
    x: &Field,
    y: &Field,
    st: &ScaleStats,
    g: &StatGrads,
    win: usize,
) -> Field {
    let (h, w) = x.dims();
    let n = (win * win) as f64;
    let a: Vec<f64> = (0..st.n_windows)
        .map(|i| g.d_mu[i] - 2.0 * g.d_var[i] * st.mu_y[i] - g.d_cov[i] * st.mu_x[i])
        .collect();
    let adj_a = box_sum_adjoint(&a, h, w, win);
    let adj_b = box_sum_adjoint(&g.d_var, h, w, win);
    let adj_c = box_sum_adjoint(&g.d_cov, h, w, win);
    let data = (0..h * w)
        .map(|q| (adj_a[q] + 2.0 * y.data()[q] * adj_b[q] + x.data()[q] * adj_c[q]) / n)
        .collect();
    Field::new(h, w, data).expect("dims preserved")
}

fn luminance(mx: f64, my: f64, c1: f64) -> (f64, f64) {
    let num = 2.0 * mx * my + c1;
    let den = mx * mx + my * my + c1;
    (num / den, (2.0 * mx * den - num * 2.0 * my) / (den * den))
}

/// Mean over valid windows of `I^alpha C^beta S^gamma`, with the gradient
/// when requested.
pub(crate) fn ssim_map_mean(
    x: &Field,
    y: &Field,
    p: &MetricParams,
    alpha: f64,
    beta: f64,
    gamma: f64,
    want_grad: bool,
) -> Result<(f64, Option<Field>), MetricError> {
    let win = p.window_size;
    let st = scale_stats(x, y, win);
    let k = st.n_windows;
    let (c1, c2, c3) = (p.c1(), p.c2(), p.c3());
    let inv_k = 1.0 / k as f64;
    let mut total = 0.0;
    let mut g = StatGrads::with_capacity(if want_grad { k } else { 0 });
    for i in 0..k {
        let (mx, my, vx, vy, cov) = (st.mu_x[i], st.mu_y[i], st.var_x[i], st.var_y[i], st.cov[i]);
        let (lum, d_lum) = luminance(mx, my, c1);
        let (ia, d_ia) = pow_d(lum, alpha)?;
        let (rest, d_var, d_cov) = contrast_structure(vx, vy, cov, c2, c3, beta, gamma)?;
        total += ia * rest;
        if want_grad {
            g.d_mu.push(d_ia * d_lum * rest * inv_k);
            g.d_var.push(ia * d_var * inv_k);
            g.d_cov.push(ia * d_cov * inv_k);
        }
    }
    let grad = want_grad.then(|| backprop_stats(x, y, &st, &g, win));
    Ok((total * inv_k, grad))
}

/// `C^beta S^gamma` and its partials with respect to `var_y` and `cov`.
fn contrast_structure(
    vx: f64,
    vy: f64,
    cov: f64,
    c2: f64,
    c3: f64,
    beta: f64,
    gamma: f64,
) -> Result<(f64, f64, f64), MetricError> {
    let den = vx + vy + c2;
    if beta == gamma {
        // C3 = C2/2 collapses C*S into one smooth term.
        let cs = (2.0 * cov + c2) / den;
        let (csb, d_csb) = pow_d(cs, beta)?;
        return Ok((csb, d_csb * (-cs / den), d_csb * (2.0 / den)));
    }
    let (sx, sy) = (vx.sqrt(), vy.sqrt());
    let c_num = 2.0 * sx * sy + c2;
    let c = c_num / den;
    let s_den = sx * sy + c3;
    let s = (cov + c3) / s_den;
    // d sigma_y / d var_y is unbounded at sigma_y = 0; the one-sided value
    // there drops that term.
    let ratio = if sy > 0.0 { sx / sy } else { 0.0 };
    let dc_dvar = (ratio * den - c_num) / (den * den);
    let ds_dvar = -(cov + c3) * 0.5 * ratio / (s_den * s_den);
    let ds_dcov = 1.0 / s_den;
    let (cb, d_cb) = pow_d(c, beta)?;
    let (sg, d_sg) = pow_d(s, gamma)?;
    Ok((
        cb * sg,
        d_cb * dc_dvar * sg + cb * d_sg * ds_dvar,
        cb * d_sg * ds_dcov,
    ))
}

/// Mean over valid windows of the contrast-structure product `C * S`.
pub(crate) fn cs_map_mean(
    x: &Field,
    y: &Field,
    p: &MetricParams,
    want_grad: bool,
) -> (f64, Option<Field>) {
    let win = p.window_size;
    let st = scale_stats(x, y, win);
    let k = st.n_windows;
    let c2 = p.c2();
    let inv_k = 1.0 / k as f64;
    let mut total = 0.0;
    let mut g = StatGrads::with_capacity(if want_grad { k } else { 0 });
    for i in 0..k {
        let den = st.var_x[i] + st.var_y[i] + c2;
        let cs = (2.0 * st.cov[i] + c2) / den;
        total += cs;
        if want_grad {
            g.d_mu.push(0.0);
            g.d_var.push(-cs / den * inv_k);
            g.d_cov.push(2.0 / den * inv_k);
        }
    }
    let grad = want_grad.then(|| backprop_stats(x, y, &st, &g, win));
    (total * inv_k, grad)
}

pub(crate) fn check_inputs(x: &Field, y: &Field, p: &MetricParams) -> Result<(), MetricError> {
    p.validate()?;
    x.same_dims(y)?;
    let (h, w) = x.dims();
    if h < p.window_size || w < p.window_size {
        return Err(MetricError::TooSmall {
            height: h,
            width: w,
            window: p.window_size,
        });
    }
    Ok(())
}

fn ssim_impl(x: &Field, y: &Field, p: &MetricParams, grad: bool) -> Result<MetricResult, MetricError> {
    check_inputs(x, y, p)?;
    let (value, gradient) = ssim_map_mean(x, y, p, p.alpha, p.beta[0], p.gamma[0], grad)?;
    Ok(MetricResult { value, gradient })
}

/// Single-scale SSIM. Exponents are `alpha`, `beta[0]`, `gamma[0]`.
pub fn ssim(x: &Field, y: &Field, params: &MetricParams) -> Result<MetricResult, MetricError> {
    ssim_impl(x, y, params, false)
}

/// [`ssim`] plus `d ssim / d y`.
pub fn ssim_grad(x: &Field, y: &Field, params: &MetricParams) -> Result<MetricResult, MetricError> {
    ssim_impl(x, y, params, true)
}
