//! Side-by-side image grids for visual inspection.

use std::path::Path;

use percept_core::{Field, Image, ImageError, PixelRange};

const GAP: usize = 1;

/// Rows of equally sized images tiled with a one-pixel white gap, written
/// as 8-bit grayscale. Every cell is mapped to `[0,1]` first.
pub fn save_grid(rows: &[Vec<Image>], path: &Path) -> Result<(), ImageError> {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let Some(first) = rows.iter().flatten().next() else {
        return Ok(());
    };
    let (h, w) = first.dims();
    let gh = rows.len() * (h + GAP) - GAP;
    let gw = cols * (w + GAP) - GAP;
    let mut canvas = Field::filled(gh, gw, 1.0);
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            if img.dims() != (h, w) {
                let (ih, iw) = img.dims();
                return Err(ImageError::DimensionMismatch(h, w, ih, iw));
            }
            let unit = img.rescale_range(PixelRange::Unit);
            for i in 0..h {
                for j in 0..w {
                    canvas.set(r * (h + GAP) + i, c * (w + GAP) + j, unit.get(i, j));
                }
            }
        }
    }
    percept_core::image::save_image(&Image::clamped(canvas, PixelRange::Unit), path)
}
