//! Valid-region box sums over a square window and their adjoint.
//!
//! Both passes are separable and sum a fixed number of terms per output in a
//! fixed order, so results do not depend on image size or threading.

/// `out[i][j] = sum_{a,b < win} f[i+a][j+b]` for every valid top-left corner.
/// Output is `(h - win + 1) x (w - win + 1)`.
pub(crate) fn box_sum(f: &[f64], h: usize, w: usize, win: usize) -> Vec<f64> {
    let (vh, vw) = (h - win + 1, w - win + 1);
    let mut rows = vec![0.0; h * vw];
    for r in 0..h {
        let src = &f[r * w..(r + 1) * w];
        let dst = &mut rows[r * vw..(r + 1) * vw];
        for (c, d) in dst.iter_mut().enumerate() {
            *d = src[c..c + win].iter().sum();
        }
    }
    let mut out = vec![0.0; vh * vw];
    for r in 0..vh {
        for c in 0..vw {
            let mut s = 0.0;
            for a in 0..win {
                s += rows[(r + a) * vw + c];
            }
            out[r * vw + c] = s;
        }
    }
    out
}

/// Transpose of [`box_sum`]: every pixel receives the sum of `g` over all
/// windows that contain it.
pub(crate) fn box_sum_adjoint(g: &[f64], h: usize, w: usize, win: usize) -> Vec<f64> {
    let (vh, vw) = (h - win + 1, w - win + 1);
    debug_assert_eq!(g.len(), vh * vw);
    // Columns first: cols[i][q] = sum over window columns j covering q.
    let mut cols = vec![0.0; vh * w];
    for i in 0..vh {
        let src = &g[i * vw..(i + 1) * vw];
        for q in 0..w {
            let lo = q.saturating_sub(win - 1);
            let hi = q.min(vw - 1);
            if lo <= hi {
                cols[i * w + q] = src[lo..=hi].iter().sum();
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for p in 0..h {
        let lo = p.saturating_sub(win - 1);
        let hi = p.min(vh - 1);
        if lo > hi {
            continue;
        }
        for q in 0..w {
            let mut s = 0.0;
            for i in lo..=hi {
                s += cols[i * w + q];
            }
            out[p * w + q] = s;
        }
    }
    out
}
