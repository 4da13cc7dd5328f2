//! Seeded synthetic datasets and image-directory loading.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::{load_image, Field, Image, ImageError, PixelRange};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// A single antialiased straight edge between two grey levels.
    Edges,
    /// One to three flat discs on a flat background.
    Discs,
    /// An oriented sinusoid.
    Gratings,
    /// Independent uniform pixels.
    Noise,
    /// Edges, discs and gratings in turn, with light Gaussian noise.
    Mixed,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::Edges,
        SynthKind::Discs,
        SynthKind::Gratings,
        SynthKind::Noise,
        SynthKind::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Edges => "edges",
            SynthKind::Discs => "discs",
            SynthKind::Gratings => "gratings",
            SynthKind::Noise => "noise",
            SynthKind::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown synthetic kind {s:?}"))
    }
}

fn edge(r: &mut Rng, size: usize) -> Field {
    let theta = r.random_range(0.0..std::f64::consts::TAU);
    let (nx, ny) = (theta.cos(), theta.sin());
    let c = size as f64 / 2.0;
    let off = r.random_range(-0.25..0.25) * size as f64;
    let a: f64 = r.random_range(0.05..0.95);
    let mut b = r.random_range(0.05..0.95);
    if (a - b).abs() < 0.2 {
        b = if a < 0.5 { a + 0.4 } else { a - 0.4 };
    }
    Field::from_fn(size, size, |i, j| {
        let d = (j as f64 + 0.5 - c) * nx + (i as f64 + 0.5 - c) * ny - off;
        let t = (d + 0.5).clamp(0.0, 1.0);
        a + (b - a) * t
    })
}

fn discs(r: &mut Rng, size: usize) -> Field {
    let mut f = Field::filled(size, size, r.random_range(0.05..0.5));
    let n = r.random_range(1..=3);
    let s = size as f64;
    for _ in 0..n {
        let (cy, cx) = (r.random_range(0.2..0.8) * s, r.random_range(0.2..0.8) * s);
        let rad = r.random_range(0.12..0.35) * s;
        let v = r.random_range(0.5..0.95);
        for i in 0..size {
            for j in 0..size {
                let d = ((i as f64 + 0.5 - cy).powi(2) + (j as f64 + 0.5 - cx).powi(2)).sqrt();
                let cover = (rad - d + 0.5).clamp(0.0, 1.0);
                f.set(i, j, f.get(i, j) * (1.0 - cover) + v * cover);
            }
        }
    }
    f
}

fn grating(r: &mut Rng, size: usize) -> Field {
    let theta = r.random_range(0.0..std::f64::consts::PI);
    let freq = r.random_range(0.05..0.25);
    let phase = r.random_range(0.0..std::f64::consts::TAU);
    let amp = r.random_range(0.2..0.45);
    let (cx, cy) = (theta.cos(), theta.sin());
    Field::from_fn(size, size, |i, j| {
        let u = j as f64 * cx + i as f64 * cy;
        0.5 + amp * (std::f64::consts::TAU * freq * u + phase).sin()
    })
}

/// Image `index` of a synthetic dataset in `[0, 1]`. Each image has its own
/// stream, so a dataset of `n` images is a prefix of one of `n + k`.
pub fn synthetic_image(kind: SynthKind, size: usize, seed: u64, index: usize) -> Field {
    let mut r = rng::substream(seed, kind.name(), index as u64);
    match kind {
        SynthKind::Edges => edge(&mut r, size),
        SynthKind::Discs => discs(&mut r, size),
        SynthKind::Gratings => grating(&mut r, size),
        SynthKind::Noise => Field::from_fn(size, size, |_, _| r.random::<f64>()),
        SynthKind::Mixed => {
            let base = match index % 3 {
                0 => edge(&mut r, size),
                1 => discs(&mut r, size),
                _ => grating(&mut r, size),
            };
            let n = Normal::new(0.0, 0.02).expect("valid std");
            let mut out = base;
            for v in out.data_mut() {
                *v = (*v + n.sample(&mut r)).clamp(0.0, 1.0);
            }
            out
        }
    }
}

pub fn synthetic(kind: SynthKind, count: usize, size: usize, seed: u64) -> Vec<Field> {
    (0..count)
        .map(|i| synthetic_image(kind, size, seed, i))
        .collect()
}

/// Maps `[0, 1]` data into `range`.
pub fn to_range(images: &[Field], range: PixelRange) -> Vec<Field> {
    let (lo, hi) = range.bounds();
    images.iter().map(|f| f.map(|v| lo + (hi - lo) * v)).collect()
}

/// First `round(frac * n)` images for training, the rest held out.
pub fn split(images: Vec<Field>, train_frac: f64) -> (Vec<Field>, Vec<Field>) {
    let k = ((images.len() as f64 * train_frac).round() as usize).min(images.len());
    let mut train = images;
    let held = train.split_off(k);
    (train, held)
}

/// Regular, non-hidden files in `dir`, sorted by file name.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, ImageError> {
    if !dir.is_dir() {
        return Err(ImageError::NotFound(dir.display().to_string()));
    }
    let mut out = Vec::new();
    let io = |source| ImageError::Io {
        path: dir.display().to_string(),
        source,
    };
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        let path = entry.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// `(file name, luma image)` pairs and `(path, error)` pairs from [`load_dir`].
pub type Loaded = (Vec<(String, Image)>, Vec<(PathBuf, ImageError)>);

/// Decodable images in `dir` as luma, in file-name order, plus the files
/// that failed to decode.
pub fn load_dir(dir: &Path) -> Result<Loaded, ImageError> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for path in list_files(dir)? {
        match load_image(&path) {
            Ok(img) => {
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                ok.push((name, img.into_luma()));
            }
            Err(e) => failed.push((path, e)),
        }
    }
    Ok((ok, failed))
}

fn default_size() -> usize {
    16
}

/// Where a run's images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Every decodable image in a directory, as luma.
    Dir { path: PathBuf },
    Synthetic {
        kind: SynthKind,
        count: usize,
        #[serde(default = "default_size")]
        size: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl DataSource {
    /// Named images in `[0, 1]`.
    pub fn load(&self) -> Result<Vec<(String, Field)>, ImageError> {
        match self {
            DataSource::Dir { path } => {
                let (ok, _) = load_dir(path)?;
                Ok(ok
                    .into_iter()
                    .map(|(n, img)| (n, img.rescale_range(PixelRange::Unit).into_field()))
                    .collect())
            }
            DataSource::Synthetic {
                kind,
                count,
                size,
                seed,
            } => Ok(synthetic(*kind, *count, *size, *seed)
                .into_iter()
                .enumerate()
                .map(|(i, f)| (format!("{}_{i:05}", kind.name()), f))
                .collect()),
        }
    }

    /// Checks what can be checked without reading pixels.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            DataSource::Dir { path } if !path.is_dir() => {
                Err(format!("data directory {} does not exist", path.display()))
            }
            DataSource::Synthetic { size, .. } if *size == 0 => Err("synthetic size must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// A deterministic stand-in for a natural photograph: smooth shading,
/// several sharp-edged shapes and a band of fine texture, as 8-bit RGB.
pub fn standin_photo(size: usize, seed: u64, index: usize) -> crate::image::RgbImage {
    let mut r = rng::substream(seed, "standin", index as u64);
    let s = size as f64;
    let base: [f64; 3] = std::array::from_fn(|_| r.random_range(60.0..190.0));
    let grad: [f64; 3] = std::array::from_fn(|_| r.random_range(-60.0..60.0));
    let shapes: Vec<(f64, f64, f64, [f64; 3], bool)> = (0..6)
        .map(|_| {
            (
                r.random_range(0.1..0.9) * s,
                r.random_range(0.1..0.9) * s,
                r.random_range(0.05..0.2) * s,
                std::array::from_fn(|_| r.random_range(0.0..255.0)),
                r.random::<bool>(),
            )
        })
        .collect();
    let freq = r.random_range(0.15..0.35);
    let theta = r.random_range(0.0..std::f64::consts::PI);
    let band = (r.random_range(0.2..0.6) * s, r.random_range(0.15..0.3) * s);
    let noise = Normal::new(0.0, 3.0).expect("valid std");
    let px = (0..size * size)
        .map(|k| {
            let (i, j) = ((k / size) as f64 + 0.5, (k % size) as f64 + 0.5);
            let t = (i + j) / (2.0 * s);
            let mut c: [f64; 3] = std::array::from_fn(|ch| base[ch] + grad[ch] * (t - 0.5));
            for &(cy, cx, rad, col, square) in &shapes {
                let inside = if square {
                    (i - cy).abs().max((j - cx).abs()) - rad
                } else {
                    ((i - cy).powi(2) + (j - cx).powi(2)).sqrt() - rad
                };
                let cover = (0.5 - inside).clamp(0.0, 1.0);
                for ch in 0..3 {
                    c[ch] = c[ch] * (1.0 - cover) + col[ch] * cover;
                }
            }
            if (i - band.0).abs() < band.1 / 2.0 {
                let u = j * theta.cos() + i * theta.sin();
                let v = 40.0 * (std::f64::consts::TAU * freq * u).sin();
                c.iter_mut().for_each(|x| *x += v);
            }
            let e = noise.sample(&mut r);
            c.map(|x| (x + e).round().clamp(0.0, 255.0))
        })
        .collect();
    crate::image::RgbImage::new(size, size, px).expect("consistent dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_seeded_prefix_stable_and_in_range() {
        for kind in [
            SynthKind::Edges,
            SynthKind::Discs,
            SynthKind::Gratings,
            SynthKind::Noise,
            SynthKind::Mixed,
        ] {
            let a = synthetic(kind, 8, 16, 3);
            let b = synthetic(kind, 12, 16, 3);
            assert_eq!(a[..], b[..8]);
            assert_ne!(a, synthetic(kind, 8, 16, 4));
            assert!(a.iter().flat_map(|f| f.data()).all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn images_are_not_flat() {
        for f in synthetic(SynthKind::Mixed, 30, 16, 0) {
            let m = f.mean();
            let var = f.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / f.len() as f64;
            assert!(var > 1e-3, "{var}");
        }
    }

    #[test]
    fn split_and_range() {
        let imgs = synthetic(SynthKind::Edges, 10, 4, 0);
        let (tr, te) = split(imgs.clone(), 0.8);
        assert_eq!((tr.len(), te.len()), (8, 2));
        let s = to_range(&imgs, PixelRange::Signed);
        assert!((s[0].get(0, 0) - (2.0 * imgs[0].get(0, 0) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn dir_listing_is_sorted_and_skips_hidden() {
        let d = tempfile::tempdir().unwrap();
        for n in ["b.pgm", "a.pgm", ".hidden.pgm", "c.txt"] {
            let img = Image::constant(4, 4, 0.5, PixelRange::Unit);
            if n.ends_with(".pgm") {
                crate::image::save_image(&img, d.path().join(n)).unwrap();
            } else {
                std::fs::write(d.path().join(n), "x").unwrap();
            }
        }
        let (ok, bad) = load_dir(d.path()).unwrap();
        let names: Vec<_> = ok.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a.pgm", "b.pgm"]);
        assert_eq!(bad.len(), 1);
        assert!(list_files(&d.path().join("missing")).is_err());
    }

    #[test]
    fn standin_is_deterministic_and_textured() {
        let a = standin_photo(64, 1, 0);
        assert_eq!(a.pixels(), standin_photo(64, 1, 0).pixels());
        assert_ne!(a.pixels(), standin_photo(64, 1, 1).pixels());
    }
}
