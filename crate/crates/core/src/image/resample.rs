use rand::Rng as _;

use super::{Field, Image, ImageError};
use crate::rng;

/// 2x2 box average followed by stride-2 decimation. A trailing odd row or
/// column is dropped.
pub fn downsample2(img: &Field) -> Result<Field, ImageError> {
    let (h, w) = img.dims();
    if h < 2 || w < 2 {
        return Err(ImageError::TooSmall {
            height: h,
            width: w,
            op: "downsample2",
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    Ok(Field::from_fn(oh, ow, |r, c| {
        let (r2, c2) = (2 * r, 2 * c);
        0.25 * (img.get(r2, c2) + img.get(r2, c2 + 1) + img.get(r2 + 1, c2) + img.get(r2 + 1, c2 + 1))
    }))
}

/// Adjoint of [`downsample2`]: every coarse-pixel value is spread, times
/// 1/4, over its 2x2 source block. Dropped trailing rows/columns get zero.
pub fn downsample2_adjoint(coarse: &Field, fine_h: usize, fine_w: usize) -> Field {
    debug_assert_eq!(coarse.dims(), (fine_h / 2, fine_w / 2));
    let mut out = Field::zeros(fine_h, fine_w);
    for r in 0..coarse.height() {
        for c in 0..coarse.width() {
            let g = 0.25 * coarse.get(r, c);
            out.set(2 * r, 2 * c, g);
            out.set(2 * r, 2 * c + 1, g);
            out.set(2 * r + 1, 2 * c, g);
            out.set(2 * r + 1, 2 * c + 1, g);
        }
    }
    out
}

const CUBIC_A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel (Keys, a = -0.5).
pub(crate) fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Sparse resampling matrix for one axis: for every output sample, the
/// clamped source indices and normalised weights.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_out as f64 / n_in as f64;
    // When shrinking, stretch the kernel so it low-passes at the output rate.
    let kscale = scale.min(1.0);
    let support = 2.0 / kscale;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            for j in lo..=hi {
                let w = cubic((center - j as f64) * kscale);
                if w == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, n_in as isize - 1) as usize;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in taps.iter_mut() {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable bicubic resize on a raw field, no clipping.
pub(crate) fn resize_bicubic_field(img: &Field, out_h: usize, out_w: usize) -> Field {
    let (h, w) = img.dims();
    let wx = axis_weights(w, out_w);
    let wy = axis_weights(h, out_h);
    let mut tmp = vec![0.0; h * out_w];
    for r in 0..h {
        let row = &img.data()[r * w..(r + 1) * w];
        for (c, taps) in wx.iter().enumerate() {
            tmp[r * out_w + c] = taps.iter().map(|&(j, k)| k * row[j]).sum();
        }
    }
    let mut out = Field::zeros(out_h, out_w);
    for (r, taps) in wy.iter().enumerate() {
        for c in 0..out_w {
            let v = taps.iter().map(|&(j, k)| k * tmp[j * out_w + c]).sum();
            out.set(r, c, v);
        }
    }
    out
}

/// Bicubic resize with pixel-centre alignment and edge clamping. Output is
/// clipped to the input's declared range.
///
/// Downscaling widens the kernel by the inverse scale factor (antialiased
/// bicubic); upscaling uses the plain 4-tap kernel.
pub fn resize_bicubic(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "target size must be positive");
    Image::clamped(resize_bicubic_field(img, out_h, out_w), img.range())
}

/// Nearest-neighbour resize with pixel-centre alignment.
pub fn resize_nearest(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "target size must be positive");
    let (h, w) = img.dims();
    let pick = |i: usize, n_in: usize, n_out: usize| {
        let x = (i as f64 + 0.5) * n_in as f64 / n_out as f64;
        (x.floor() as usize).min(n_in - 1)
    };
    let f = Field::from_fn(out_h, out_w, |r, c| img.get(pick(r, h, out_h), pick(c, w, out_w)));
    Image::clamped(f, img.range())
}

/// Central `(H-2n) x (W-2n)` region.
pub fn crop_border(img: &Image, n: usize) -> Result<Image, ImageError> {
    let (h, w) = img.dims();
    if h <= 2 * n || w <= 2 * n {
        return Err(ImageError::TooSmall {
            height: h,
            width: w,
            op: "crop_border",
        });
    }
    Ok(crop(img, n, n, h - 2 * n, w - 2 * n))
}

pub(crate) fn crop(img: &Image, top: usize, left: usize, h: usize, w: usize) -> Image {
    let f = Field::from_fn(h, w, |r, c| img.get(top + r, left + c));
    Image::from_field(f, img.range()).expect("sub-image of a valid image is valid")
}

/// `count` square patches at uniformly random valid positions.
pub fn extract_patches(
    img: &Image,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Image>, ImageError> {
    let (h, w) = img.dims();
    if size == 0 || size > h || size > w {
        return Err(ImageError::TooSmall {
            height: h,
            width: w,
            op: "extract_patches",
        });
    }
    let mut rng = rng::stream(seed, "patches");
    Ok((0..count)
        .map(|_| {
            let top = rng.random_range(0..=h - size);
            let left = rng.random_range(0..=w - size);
            crop(img, top, left, size, size)
        })
        .collect())
}
