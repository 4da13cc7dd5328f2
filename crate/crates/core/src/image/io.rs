//! PGM/PPM (P5/P6) and 8-bit PNG decoding and encoding.
//!
//! Pixels are `f64` everywhere in memory; quantisation to 8 bits happens only
//! here.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use super::{Image, ImageError, PixelRange, RgbImage};

/// What a file decoded to.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    /// Grayscale, normalised into `[0,1]`.
    Gray(Image),
    /// Colour, channels in `[0,255]`.
    Rgb(RgbImage),
}

impl LoadedImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            LoadedImage::Gray(g) => g.dims(),
            LoadedImage::Rgb(c) => (c.height(), c.width()),
        }
    }

    /// Grayscale view: RGB goes through the 601-2 luma transform.
    pub fn into_luma(self) -> Image {
        match self {
            LoadedImage::Gray(g) => g,
            LoadedImage::Rgb(c) => super::rgb_to_luma(&c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pnm,
    Png,
}

fn format_from_extension(path: &Path) -> Option<Format> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" => Some(Format::Pnm),
        "png" => Some(Format::Png),
        _ => None,
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage, ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ImageError::NotFound(name.clone()),
        _ => ImageError::Io {
            path: name.clone(),
            source: e,
        },
    })?;
    // Sniff the magic bytes first so a mislabelled extension still decodes.
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes, &name);
    }
    if bytes.len() >= 2 && bytes[0] == b'P' && (bytes[1] == b'5' || bytes[1] == b'6') {
        return decode_pnm(&bytes, &name);
    }
    match format_from_extension(path) {
        Some(Format::Png) => decode_png(&bytes, &name),
        Some(Format::Pnm) => decode_pnm(&bytes, &name),
        None => Err(ImageError::UnsupportedFormat(name)),
    }
}

fn corrupt(path: &str, reason: impl Into<String>) -> ImageError {
    ImageError::Corrupt {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn decode_pnm(bytes: &[u8], path: &str) -> Result<LoadedImage, ImageError> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(corrupt(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt(path, "malformed header"));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(path, "malformed header"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt(path, "missing raster separator"));
    }
    pos += 1;

    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(corrupt(path, "zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "{path}: maxval {maxval} (only 8-bit PNM is supported)"
        )));
    }
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let need = width * height * channels;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| corrupt(path, format!("expected {need} raster bytes")))?;
    let maxval = maxval as f64;
    if raster.iter().any(|&b| b as f64 > maxval) {
        return Err(corrupt(path, "sample exceeds maxval"));
    }
    if channels == 1 {
        let data = raster.iter().map(|&b| b as f64 / maxval).collect();
        Ok(LoadedImage::Gray(Image::new(
            height,
            width,
            data,
            PixelRange::Unit,
        )?))
    } else {
        let k = 255.0 / maxval;
        let data = raster
            .chunks_exact(3)
            .map(|p| [p[0] as f64 * k, p[1] as f64 * k, p[2] as f64 * k])
            .collect();
        Ok(LoadedImage::Rgb(RgbImage::new(height, width, data)?))
    }
}

fn decode_png(bytes: &[u8], path: &str) -> Result<LoadedImage, ImageError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| corrupt(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(ImageError::UnsupportedFormat(format!(
                "{path}: unexpanded palette"
            )))
        }
    };
    let rows = buf.chunks_exact(info.line_size).take(h);
    if channels <= 2 {
        let mut data = Vec::with_capacity(w * h);
        for row in rows {
            data.extend(row.chunks_exact(channels).take(w).map(|p| p[0] as f64 / 255.0));
        }
        Ok(LoadedImage::Gray(Image::new(h, w, data, PixelRange::Unit)?))
    } else {
        let mut data = Vec::with_capacity(w * h);
        for row in rows {
            data.extend(
                row.chunks_exact(channels)
                    .take(w)
                    .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]),
            );
        }
        Ok(LoadedImage::Rgb(RgbImage::new(h, w, data)?))
    }
}

fn quantize(img: &Image) -> Vec<u8> {
    let (lo, hi) = img.range().bounds();
    img.pixels()
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Writes an 8-bit grayscale file; the format follows the extension
/// (`.pgm` or `.png`). Signed-range images are mapped onto `[0,1]` first.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    write_8bit(path.as_ref(), img.width(), img.height(), false, &quantize(img))
}

/// Writes an 8-bit colour file (`.ppm` or `.png`).
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes: Vec<u8> = img
        .pixels()
        .iter()
        .flat_map(|p| p.map(|v| v.round().clamp(0.0, 255.0) as u8))
        .collect();
    write_8bit(path.as_ref(), img.width(), img.height(), true, &bytes)
}

fn write_8bit(path: &Path, w: usize, h: usize, rgb: bool, bytes: &[u8]) -> Result<(), ImageError> {
    let name = path.display().to_string();
    let format = format_from_extension(path)
        .ok_or_else(|| ImageError::UnsupportedFormat(name.clone()))?;
    let io_err = |e: std::io::Error| ImageError::Io {
        path: name.clone(),
        source: e,
    };
    match format {
        Format::Pnm => {
            let magic = if rgb { "P6" } else { "P5" };
            let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(bytes);
            fs::write(path, out).map_err(io_err)
        }
        Format::Png => {
            let file = fs::File::create(path).map_err(io_err)?;
            let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
            enc.set_color(if rgb {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let png_err = |e: png::EncodingError| ImageError::Io {
                path: name.clone(),
                source: std::io::Error::other(e.to_string()),
            };
            let mut writer = enc.write_header().map_err(png_err)?;
            writer.write_image_data(bytes).map_err(png_err)?;
            writer.finish().map_err(png_err)
        }
    }
}
