//! Central finite differences, the verification oracle for every analytic
//! gradient in the crate.

use super::{MetricError, MetricKind, MetricParams};
use crate::image::Field;

/// `(f(y + eps e_q) - f(y - eps e_q)) / 2 eps` at the listed flat indices.
pub fn fd_gradient_at(
    metric: MetricKind,
    x: &Field,
    y: &Field,
    params: &MetricParams,
    eps: f64,
    indices: &[usize],
) -> Result<Vec<f64>, MetricError> {
    assert!(eps > 0.0, "eps must be positive");
    // Surface input errors before perturbing anything.
    metric.value(x, y, params)?;
    let mut yp = y.clone();
    indices
        .iter()
        .map(|&q| {
            let orig = yp.data()[q];
            yp.data_mut()[q] = orig + eps;
            let up = metric.value(x, &yp, params)?;
            yp.data_mut()[q] = orig - eps;
            let down = metric.value(x, &yp, params)?;
            yp.data_mut()[q] = orig;
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

/// Central-difference gradient at every pixel of `y`.
pub fn fd_gradient(
    metric: MetricKind,
    x: &Field,
    y: &Field,
    params: &MetricParams,
    eps: f64,
) -> Result<Field, MetricError> {
    let all: Vec<usize> = (0..y.len()).collect();
    let data = fd_gradient_at(metric, x, y, params, eps, &all)?;
    Ok(Field::new(y.height(), y.width(), data)?)
}

/// Largest absolute disagreement, relative to the largest oracle magnitude:
/// `max_q |a_q - n_q| / max_q |n_q|`.
///
/// Normalising by the field's scale rather than per entry keeps entries
/// whose true gradient is near zero from turning rounding noise into a
/// spurious failure.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric
        .iter()
        .chain(analytic)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let worst = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::test_support::random_field;

    #[test]
    fn mse_fd_matches_closed_form() {
        let x = random_field(8, 8, 1);
        let y = random_field(8, 8, 2);
        let fd = fd_gradient(MetricKind::Mse, &x, &y, &MetricParams::default(), 1e-6).unwrap();
        let n = x.len() as f64;
        for q in 0..x.len() {
            let exact = 2.0 * (y.data()[q] - x.data()[q]) / n;
            assert!((fd.data()[q] - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn ssim_fd_near_zero_at_identity() {
        let x = random_field(16, 16, 3);
        let fd = fd_gradient(MetricKind::Ssim, &x, &x, &MetricParams::default(), 1e-5).unwrap();
        assert!(fd.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn relative_error_is_scale_normalised() {
        assert_eq!(max_relative_error(&[0.0, 2.0], &[0.0, 2.0]), 0.0);
        assert!((max_relative_error(&[1.0, 0.0], &[1.0, 0.1]) - 0.1).abs() < 1e-15);
        assert_eq!(max_relative_error(&[0.0], &[0.0]), 0.0);
    }
}
