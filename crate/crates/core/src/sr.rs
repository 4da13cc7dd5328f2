//! Super-resolution evaluation on the luma channel: low-resolution
//! generation, bicubic and model upscaling, and PSNR/SSIM reports.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::list_files;
use crate::image::resample::{crop, resize_bicubic_field};
use crate::image::{
    crop_border, load_image, resize_nearest, rgb_to_y, rgb_to_y_studio, Field, Image, ImageError,
    LoadedImage, RgbImage,
};
use crate::losses::{psnr, LossFunction, Psnr};
use crate::metrics::{max_scales, ms_ssim, ssim, MetricError, MetricParams};
use crate::nn::{
    optimizer_update, Checkpoint, Mode, ModelRole, Network, NnError, OptimizerConfig,
    OptimizerState, Shape,
};
use crate::rng;
use crate::util::fmt_sig6;

#[derive(Debug, thiserror::Error)]
pub enum SrError {
    #[error("scale must be at least 1")]
    InvalidScale,
    #[error("no decodable images in {0}")]
    EmptyDir(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which BT.601 luma scaling to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YConvention {
    /// `16..235` on an 8-bit scale, as produced by MATLAB's `rgb2ycbcr`.
    #[default]
    Studio,
    /// `0..255`.
    Full,
}

/// The Y channel of a decoded file in `[0,1]`. Grayscale files are treated
/// as `R = G = B`.
pub fn to_y(img: &LoadedImage, conv: YConvention) -> Image {
    let rgb = match img {
        LoadedImage::Rgb(c) => c.clone(),
        LoadedImage::Gray(g) => {
            let px = g.pixels().iter().map(|&v| [v * 255.0; 3]).collect();
            RgbImage::new(g.height(), g.width(), px).expect("same dims")
        }
    };
    match conv {
        YConvention::Studio => rgb_to_y_studio(&rgb),
        YConvention::Full => rgb_to_y(&rgb),
    }
}

/// Largest centred crop whose sides are multiples of `scale`.
pub fn crop_to_multiple(img: &Image, scale: usize) -> Result<Image, SrError> {
    if scale == 0 {
        return Err(SrError::InvalidScale);
    }
    let (h, w) = img.dims();
    let (nh, nw) = (h / scale * scale, w / scale * scale);
    if nh == 0 || nw == 0 {
        return Err(ImageError::TooSmall {
            height: h,
            width: w,
            op: "crop_to_multiple",
        }
        .into());
    }
    if (nh, nw) == (h, w) {
        return Ok(img.clone());
    }
    Ok(crop(img, (h - nh) / 2, (w - nw) / 2, nh, nw))
}

/// Bicubic downscale by `scale`, after cropping to a multiple of it.
pub fn make_lr(hr: &Image, scale: usize) -> Result<Image, SrError> {
    let hr = crop_to_multiple(hr, scale)?;
    if scale == 1 {
        return Ok(hr);
    }
    let (h, w) = hr.dims();
    Ok(Image::clamped(
        resize_bicubic_field(&hr, h / scale, w / scale),
        hr.range(),
    ))
}

pub fn upscale_bicubic(lr: &Image, scale: usize) -> Result<Image, SrError> {
    if scale == 0 {
        return Err(SrError::InvalidScale);
    }
    let (h, w) = lr.dims();
    Ok(Image::clamped(
        resize_bicubic_field(lr, h * scale, w * scale),
        lr.range(),
    ))
}

/// A refinement network applied to the bicubic upscale. With `residual` its
/// output is added to the upscale; otherwise it replaces it.
#[derive(Debug, Clone, PartialEq)]
pub struct SrModel {
    pub net: Network,
    pub residual: bool,
}

impl SrModel {
    /// Rebinds the network to an `h x w` input. Works for size-agnostic
    /// stacks (convolutions and activations).
    fn bound_to(&self, h: usize, w: usize) -> Result<Network, NnError> {
        let s = Shape::new(1, h, w);
        let net = if self.net.input_shape() == s {
            self.net.clone()
        } else {
            Network::from_parts(&self.net.specs(), s, self.net.params().to_vec(), self.net.seed())?
        };
        if net.output_shape() != s {
            return Err(NnError::InvalidConfig(format!(
                "SR network maps {s} to {}",
                net.output_shape()
            )));
        }
        Ok(net)
    }

    fn refine(net: &Network, residual: bool, up: &Field) -> Result<Field, NnError> {
        let out = net.predict(up.data())?;
        let mut f = Field::new(up.height(), up.width(), out)?;
        if residual {
            f = f.zip_map(up, |a, b| a + b);
        }
        Ok(f)
    }

    pub fn to_checkpoint(&self, scale: usize, seed: u64) -> Checkpoint {
        Checkpoint::new(
            ModelRole::SuperResolution {
                scale,
                residual: self.residual,
            },
            &[("model", &self.net)],
            seed,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        match ck.model {
            ModelRole::SuperResolution { residual, .. } => Ok(SrModel {
                net: ck.network("model")?,
                residual,
            }),
            ref other => Err(NnError::Checkpoint(format!(
                "expected a super-resolution checkpoint, found {other:?}"
            ))),
        }
    }
}

/// Bicubic upscale, then the model in eval mode, clipped to range.
pub fn apply_model(lr: &Image, model: &SrModel, scale: usize) -> Result<Image, SrError> {
    let up = upscale_bicubic(lr, scale)?;
    let (h, w) = up.dims();
    let net = model.bound_to(h, w)?;
    let f = SrModel::refine(&net, model.residual, &up)?;
    Ok(Image::clamped(f, lr.range()))
}

/// Trains `model` for a fixed number of optimizer steps on
/// `(bicubic(make_lr(hr)), hr)` pairs, mini-batches drawn with replacement.
pub fn train_sr(
    model: &mut SrModel,
    loss: &LossFunction,
    hr: &[Image],
    scale: usize,
    steps: usize,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<Vec<f64>, SrError> {
    opt.validate()?;
    if hr.is_empty() {
        return Err(NnError::EmptyDataset.into());
    }
    let mut pairs = Vec::with_capacity(hr.len());
    for img in hr {
        let target = crop_to_multiple(img, scale)?;
        let up = upscale_bicubic(&make_lr(&target, scale)?, scale)?;
        pairs.push((up.into_field(), target.into_field()));
    }
    let (h, w) = pairs[0].0.dims();
    if pairs.iter().any(|(u, _)| u.dims() != (h, w)) {
        return Err(NnError::InvalidConfig("training images differ in size".into()).into());
    }
    let mut net = model.bound_to(h, w)?;
    let mut params = net.params().to_vec();
    let mut state = OptimizerState::new(params.len());
    let mut r = rng::stream(seed, "sr-batches");
    let mut history = Vec::with_capacity(steps);
    let k = 1.0 / (opt.batch_size as f64 * loss.scale);
    for _ in 0..steps {
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for _ in 0..opt.batch_size {
            let (up, target) = &pairs[r.random_range(0..pairs.len())];
            let (out, tape) = net.forward(up.data(), Mode::Train)?;
            let mut pred = Field::new(h, w, out)?;
            if model.residual {
                pred = pred.zip_map(up, |a, b| a + b);
            }
            let (v, g) = loss.value_and_grad(target, &pred).map_err(NnError::from)?;
            total += v;
            let back = net.backward(&tape, g.data())?;
            grad.iter_mut().zip(&back.params).for_each(|(a, b)| *a += k * b);
        }
        history.push(total * k);
        optimizer_update(&mut params, &grad, &mut state, opt)?;
        net.set_params(&params)?;
    }
    model.net = net;
    Ok(history)
}

/// An upscaling method under evaluation.
#[derive(Debug, Clone)]
pub enum SrMethod {
    Bicubic,
    Nearest,
    /// The HR image itself; a sanity row with infinite PSNR.
    GroundTruth,
    Model { name: String, model: SrModel },
}

impl SrMethod {
    pub fn name(&self) -> &str {
        match self {
            SrMethod::Bicubic => "bicubic",
            SrMethod::Nearest => "nearest",
            SrMethod::GroundTruth => "ground_truth",
            SrMethod::Model { name, .. } => name,
        }
    }

    pub fn upscale(&self, hr: &Image, lr: &Image, scale: usize) -> Result<Image, SrError> {
        match self {
            SrMethod::Bicubic => upscale_bicubic(lr, scale),
            SrMethod::Nearest => {
                let (h, w) = lr.dims();
                Ok(resize_nearest(lr, h * scale, w * scale))
            }
            SrMethod::GroundTruth => Ok(hr.clone()),
            SrMethod::Model { model, .. } => apply_model(lr, model, scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    pub scale: usize,
    /// Pixels shaved from every side before scoring; defaults to `scale`.
    #[serde(default)]
    pub border: Option<usize>,
    #[serde(default)]
    pub y: YConvention,
}

impl EvalOptions {
    pub fn new(scale: usize) -> Self {
        EvalOptions {
            scale,
            border: None,
            y: YConvention::default(),
        }
    }

    pub fn border(&self) -> usize {
        self.border.unwrap_or(self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrRow {
    pub name: String,
    pub method: String,
    pub scale: usize,
    pub border: usize,
    pub psnr: Psnr,
    pub ssim: f64,
    pub ms_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub images: usize,
    /// Mean over finite rows; infinite when every row is.
    pub psnr_db: f64,
    pub infinite_rows: usize,
    pub ssim: f64,
    /// Present when every row has it.
    pub ms_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrReport {
    pub scale: usize,
    pub border: usize,
    pub y: YConvention,
    /// Method names in evaluation order.
    pub methods: Vec<String>,
    /// Sorted by image name, then method order.
    pub rows: Vec<SrRow>,
    /// Files that failed to decode.
    pub skipped: usize,
}

impl SrReport {
    pub fn summary(&self, method: &str) -> Option<MethodSummary> {
        let rows: Vec<&SrRow> = self.rows.iter().filter(|r| r.method == method).collect();
        if rows.is_empty() {
            return None;
        }
        let finite: Vec<f64> = rows.iter().filter_map(|r| r.psnr.finite()).collect();
        let n = rows.len() as f64;
        Some(MethodSummary {
            method: method.to_string(),
            images: rows.len(),
            psnr_db: if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            infinite_rows: rows.len() - finite.len(),
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
            ms_ssim: rows
                .iter()
                .map(|r| r.ms_ssim)
                .sum::<Option<f64>>()
                .map(|s| s / n),
        })
    }

    pub fn summaries(&self) -> Vec<MethodSummary> {
        self.methods.iter().filter_map(|m| self.summary(m)).collect()
    }
}

/// Scores one already-converted HR luma image under every method.
pub fn evaluate_image(
    name: &str,
    hr: &Image,
    methods: &[SrMethod],
    opts: &EvalOptions,
) -> Result<Vec<SrRow>, SrError> {
    let scale = opts.scale;
    let border = opts.border();
    let hr = crop_to_multiple(hr, scale)?;
    let lr = make_lr(&hr, scale)?;
    let reference = crop_border(&hr, border)?;
    let ssim_p = MetricParams::ssim_default();
    let ms_p = MetricParams::ms_ssim_default();
    let (h, w) = reference.dims();
    let ms_ok = max_scales(h, w, ms_p.window_size) >= ms_p.scales;
    methods
        .iter()
        .map(|m| {
            let sr = crop_border(&m.upscale(&hr, &lr, scale)?, border)?;
            Ok(SrRow {
                name: name.to_string(),
                method: m.name().to_string(),
                scale,
                border,
                psnr: psnr(&reference, &sr, 1.0)?,
                ssim: ssim(&reference, &sr, &ssim_p)?.value,
                ms_ssim: if ms_ok {
                    Some(ms_ssim(&reference, &sr, &ms_p)?.value)
                } else {
                    None
                },
            })
        })
        .collect()
}

/// Evaluates named, decoded images. Names are sorted first.
pub fn evaluate_images(
    images: &[(String, LoadedImage)],
    methods: &[SrMethod],
    opts: &EvalOptions,
) -> Result<SrReport, SrError> {
    if opts.scale == 0 {
        return Err(SrError::InvalidScale);
    }
    let mut order: Vec<&(String, LoadedImage)> = images.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rows = Vec::new();
    for (name, img) in order {
        rows.extend(evaluate_image(name, &to_y(img, opts.y), methods, opts)?);
    }
    Ok(SrReport {
        scale: opts.scale,
        border: opts.border(),
        y: opts.y,
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        rows,
        skipped: 0,
    })
}

/// Every decodable image in `dir`. Files that fail to decode are counted in
/// `skipped` and reported through `on_skip`.
pub fn evaluate_dir(
    dir: &Path,
    methods: &[SrMethod],
    opts: &EvalOptions,
    on_skip: &mut dyn FnMut(&Path, &ImageError),
) -> Result<SrReport, SrError> {
    let mut images = Vec::new();
    let mut skipped = 0;
    for path in list_files(dir)? {
        match load_image(&path) {
            Ok(img) => images.push((path.file_name().unwrap().to_string_lossy().into_owned(), img)),
            Err(e) => {
                on_skip(&path, &e);
                skipped += 1;
            }
        }
    }
    if images.is_empty() {
        return Err(SrError::EmptyDir(dir.display().to_string()));
    }
    let mut report = evaluate_images(&images, methods, opts)?;
    report.skipped = skipped;
    Ok(report)
}

pub const CSV_HEADER: &str = "name,method,scale,border,psnr_db,ssim,ms_ssim";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(report: &SrReport) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.name),
            csv_field(&r.method),
            r.scale,
            r.border,
            r.psnr,
            fmt_sig6(r.ssim),
            r.ms_ssim.map(fmt_sig6).unwrap_or_default()
        );
    }
    out
}

fn method_label(m: &str) -> String {
    match m {
        "bicubic" => "Bicubic".into(),
        "nearest" => "Nearest".into(),
        "ground_truth" => "Ground truth".into(),
        other => other.to_string(),
    }
}

/// Metric-by-method table of per-method means.
pub fn render_markdown(report: &SrReport) -> String {
    let sums = report.summaries();
    let mut out = String::new();
    out.push_str("| Metric |");
    for s in &sums {
        let _ = write!(out, " {} |", method_label(&s.method));
    }
    out.push_str("\n| --- |");
    for _ in &sums {
        out.push_str(" --- |");
    }
    out.push('\n');
    if sums.is_empty() {
        return out;
    }
    out.push_str("| PSNR (dB) |");
    for s in &sums {
        let _ = write!(out, " {} |", fmt_sig6(s.psnr_db));
    }
    out.push_str("\n| SSIM |");
    for s in &sums {
        let _ = write!(out, " {} |", fmt_sig6(s.ssim));
    }
    out.push('\n');
    if sums.iter().any(|s| s.ms_ssim.is_some()) {
        out.push_str("| MS-SSIM |");
        for s in &sums {
            let v = s.ms_ssim.map(fmt_sig6).unwrap_or_else(|| "n/a".into());
            let _ = write!(out, " {v} |");
        }
        out.push('\n');
    }
    let y = match report.y {
        YConvention::Studio => "studio",
        YConvention::Full => "full",
    };
    let images = sums.first().map_or(0, |s| s.images);
    let _ = writeln!(
        out,
        "\nScale x{}, border {}, {} images, Y range {}, {} skipped.",
        report.scale, report.border, images, y, report.skipped
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn emit_report(report: &SrReport, format: ReportFormat, path: &Path) -> Result<(), SrError> {
    let text = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    };
    std::fs::write(path, text).map_err(|source| SrError::Io {
        path: path.display().to_string(),
        source,
    })
}
