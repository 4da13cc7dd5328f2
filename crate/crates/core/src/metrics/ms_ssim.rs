use super::ssim::{check_inputs, cs_map_mean, ssim_map_mean};
use super::{pow_d, MetricError, MetricParams, MetricResult};
use crate::image::{downsample2, downsample2_adjoint, Field};

/// Number of dyadic scales whose coarsest level still holds one window.
pub fn max_scales(h: usize, w: usize, win: usize) -> usize {
    let (mut h, mut w, mut m) = (h, w, 0);
    while h >= win && w >= win {
        m += 1;
        h /= 2;
        w /= 2;
    }
    m
}

/// Multi-scale SSIM.
///
/// Scale `j` (0-based) is the pair box-downsampled `j` times. Scales
/// `0..M-1` contribute `(mean C*S)^beta_j`; the coarsest contributes the mean
/// of the full per-window SSIM map `I^alpha C^beta S^gamma`, so `M = 1`
/// reproduces [`ssim`](super::ssim). Fine scales require `beta_j == gamma_j`.
pub fn ms_ssim(x: &Field, y: &Field, params: &MetricParams) -> Result<MetricResult, MetricError> {
    ms_ssim_impl(x, y, params, false)
}

/// [`ms_ssim`] plus `d ms_ssim / d y`, backpropagated through every
/// downsampling step.
pub fn ms_ssim_grad(
    x: &Field,
    y: &Field,
    params: &MetricParams,
) -> Result<MetricResult, MetricError> {
    ms_ssim_impl(x, y, params, true)
}

fn ms_ssim_impl(
    x: &Field,
    y: &Field,
    p: &MetricParams,
    want_grad: bool,
) -> Result<MetricResult, MetricError> {
    check_inputs(x, y, p)?;
    let m = p.scales;
    let (h, w) = x.dims();
    let feasible = max_scales(h, w, p.window_size);
    if feasible < m {
        return Err(MetricError::TooFewScales {
            requested: m,
            max_feasible: feasible,
            height: h,
            width: w,
        });
    }
    for j in 0..m - 1 {
        if p.beta[j] != p.gamma[j] {
            return Err(MetricError::InvalidParams(format!(
                "fine scale {j} needs beta == gamma (got {} and {})",
                p.beta[j], p.gamma[j]
            )));
        }
    }

    let mut xs = vec![x.clone()];
    let mut ys = vec![y.clone()];
    for _ in 1..m {
        let nx = downsample2(xs.last().unwrap())?;
        let ny = downsample2(ys.last().unwrap())?;
        xs.push(nx);
        ys.push(ny);
    }

    // factors[j] and d factors[j] / d y_j at scale j's resolution.
    let mut factors = Vec::with_capacity(m);
    let mut local_grads = Vec::with_capacity(m);
    for j in 0..m - 1 {
        let (mean_cs, g) = cs_map_mean(&xs[j], &ys[j], p, want_grad);
        let (f, df) = pow_d(mean_cs, p.beta[j])?;
        factors.push(f);
        local_grads.push(g.map(|mut g| {
            g.scale(df);
            g
        }));
    }
    let (coarse, g) = ssim_map_mean(
        &xs[m - 1],
        &ys[m - 1],
        p,
        p.alpha,
        p.beta[m - 1],
        p.gamma[m - 1],
        want_grad,
    )?;
    factors.push(coarse);
    local_grads.push(g);

    let value = factors.iter().product();
    if !want_grad {
        return Ok(MetricResult {
            value,
            gradient: None,
        });
    }

    // Product of all other factors, without dividing by a factor that may be
    // zero.
    let mut prefix = vec![1.0; m + 1];
    for j in 0..m {
        prefix[j + 1] = prefix[j] * factors[j];
    }
    let mut suffix = vec![1.0; m + 1];
    for j in (0..m).rev() {
        suffix[j] = suffix[j + 1] * factors[j];
    }

    // Walk from coarse to fine, accumulating and pulling back one level at a
    // time.
    let mut acc: Option<Field> = None;
    for j in (0..m).rev() {
        let mut g = local_grads[j].take().expect("gradient requested");
        g.scale(prefix[j] * suffix[j + 1]);
        if let Some(a) = acc.take() {
            for (gi, ai) in g.data_mut().iter_mut().zip(a.data()) {
                *gi += ai;
            }
        }
        acc = Some(if j > 0 {
            let (fh, fw) = xs[j - 1].dims();
            downsample2_adjoint(&g, fh, fw)
        } else {
            g
        });
    }
    Ok(MetricResult {
        value,
        gradient: acc,
    })
}
