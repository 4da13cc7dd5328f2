use super::{Field, Image, PixelRange, RgbImage};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

fn weighted(img: &RgbImage, f: impl Fn(f64) -> f64) -> Image {
    let data = img
        .pixels()
        .iter()
        .map(|&[r, g, b]| f(KR * r + KG * g + KB * b))
        .collect();
    let field = Field::new(img.height(), img.width(), data).expect("rgb image is non-empty");
    Image::clamped(field, PixelRange::Unit)
}

/// ITU-R 601-2 luma `0.299 R + 0.587 G + 0.114 B`, normalised by 255.
pub fn rgb_to_luma(img: &RgbImage) -> Image {
    weighted(img, |l| l / 255.0)
}

/// Full-range BT.601 Y channel scaled to `[0,1]`. Same coefficients as
/// [`rgb_to_luma`], so the two agree pixelwise.
pub fn rgb_to_y(img: &RgbImage) -> Image {
    weighted(img, |l| l / 255.0)
}

/// Studio-swing BT.601 Y (`16 + 219 * luma`), scaled by 1/255. This is the
/// convention of MATLAB's `rgb2ycbcr`, which the published SR baselines use.
pub fn rgb_to_y_studio(img: &RgbImage) -> Image {
    weighted(img, |l| (16.0 + 219.0 * l / 255.0) / 255.0)
}
