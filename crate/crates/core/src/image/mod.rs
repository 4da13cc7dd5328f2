//! Grayscale/RGB image containers and the pixel-level operations the metrics,
//! networks and SR harness share.
//!
//! Two grid types exist. [`Field`] is an unconstrained real grid, used for
//! gradients, network activations and perturbed inputs. [`Image`] is a
//! [`Field`] whose pixels are guaranteed to lie inside a declared dynamic
//! range. `Image` derefs to `Field`, so every routine that only needs the
//! numbers takes `&Field`.

mod color;
mod io;
pub(crate) mod resample;

pub use color::{rgb_to_luma, rgb_to_y, rgb_to_y_studio};
pub use io::{load_image, save_image, save_rgb, LoadedImage};
pub use resample::{
    crop_border, downsample2, downsample2_adjoint, extract_patches, resize_bicubic,
    resize_nearest,
};

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyDimensions { height: usize, width: usize },
    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("pixel {index} = {value} lies outside the {range} range")]
    OutOfRange {
        index: usize,
        value: f64,
        range: PixelRange,
    },
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data in {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {height}x{width} too small for {op}")]
    TooSmall {
        height: usize,
        width: usize,
        op: &'static str,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Dynamic range an [`Image`] is declared to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelRange {
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`, the tanh output range.
    Signed,
}

impl PixelRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            PixelRange::Unit => (0.0, 1.0),
            PixelRange::Signed => (-1.0, 1.0),
        }
    }

    /// Width of the range, the `L` of the SSIM stabilising constants.
    pub fn span(self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn contains(self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v >= lo && v <= hi
    }
}

impl std::fmt::Display for PixelRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PixelRange::Unit => f.write_str("[0,1]"),
            PixelRange::Signed => f.write_str("[-1,1]"),
        }
    }
}

/// Row-major grid of reals with no range constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDimensions { height, width });
        }
        if data.len() != height * width {
            return Err(ImageError::BufferLength {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Field {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "field dimensions must be positive");
        Field {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "field dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Field {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; a field has at least one pixel.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.dims(), other.dims());
        Field {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn same_dims(&self, other: &Field) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }
}

/// A [`Field`] whose pixels lie in a declared [`PixelRange`].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    field: Field,
    range: PixelRange,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        pixels: Vec<f64>,
        range: PixelRange,
    ) -> Result<Self, ImageError> {
        Self::from_field(Field::new(height, width, pixels)?, range)
    }

    pub fn from_field(field: Field, range: PixelRange) -> Result<Self, ImageError> {
        if let Some((index, &value)) = field
            .data
            .iter()
            .enumerate()
            .find(|(_, &v)| !range.contains(v))
        {
            return Err(ImageError::OutOfRange {
                index,
                value,
                range,
            });
        }
        Ok(Image { field, range })
    }

    /// Clips every pixel into `range`; NaN maps to the lower bound.
    pub fn clamped(mut field: Field, range: PixelRange) -> Self {
        let (lo, hi) = range.bounds();
        for v in field.data.iter_mut() {
            *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        }
        Image { field, range }
    }

    pub fn constant(height: usize, width: usize, value: f64, range: PixelRange) -> Self {
        assert!(range.contains(value));
        Image {
            field: Field::filled(height, width, value),
            range,
        }
    }

    #[inline]
    pub fn range(&self) -> PixelRange {
        self.range
    }

    #[inline]
    pub fn field(&self) -> &Field {
        &self.field
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.field.data
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    /// Affine map between `[0,1]` and `[-1,1]`.
    pub fn rescale_range(&self, target: PixelRange) -> Image {
        let field = match (self.range, target) {
            (PixelRange::Unit, PixelRange::Signed) => self.field.map(|v| 2.0 * v - 1.0),
            (PixelRange::Signed, PixelRange::Unit) => self.field.map(|v| (v + 1.0) * 0.5),
            _ => self.field.clone(),
        };
        // Rounding can push an endpoint a hair outside the range.
        Image::clamped(field, target)
    }
}

/// Free-function form of [`Image::rescale_range`].
pub fn rescale_range(img: &Image, target: PixelRange) -> Image {
    img.rescale_range(target)
}

impl Deref for Image {
    type Target = Field;

    fn deref(&self) -> &Field {
        &self.field
    }
}

/// Row-major RGB triples with channel values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, pixels: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDimensions { height, width });
        }
        if pixels.len() != height * width {
            return Err(ImageError::BufferLength {
                expected: 3 * height * width,
                actual: 3 * pixels.len(),
            });
        }
        for (i, px) in pixels.iter().enumerate() {
            for &v in px {
                if !(0.0..=255.0).contains(&v) {
                    return Err(ImageError::OutOfRange {
                        index: i,
                        value: v,
                        range: PixelRange::Unit,
                    });
                }
            }
        }
        Ok(RgbImage {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }
}
