//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use percept_core::data::{DataSource, SynthKind};
use percept_core::losses::LossFunction;
use percept_core::mmd::BandwidthPolicy;
use percept_core::nn::{EarlyStop, Init, LayerSpec, OptimizerConfig};
use percept_core::sr::YConvention;
use percept_core::{LossKind, MetricParams, PixelRange};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_valid_fraction() -> f64 {
    0.2
}
fn default_range() -> PixelRange {
    PixelRange::Unit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataSource>,
    /// Range the data is mapped into before training.
    #[serde(default = "default_range")]
    pub pixel_range: PixelRange,
    /// Share of the data held out for validation.
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub loss: Option<LossConfig>,
    #[serde(default)]
    pub training: Option<TrainingConfig>,
    #[serde(default)]
    pub grad_check: Option<GradCheckConfig>,
    #[serde(default)]
    pub select: Option<SelectConfig>,
    #[serde(default)]
    pub sr: Option<SrConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

fn default_c() -> f64 {
    1000.0
}
fn one() -> usize {
    1
}
fn default_scale_pairs() -> usize {
    percept_core::losses::DEFAULT_SCALE_PAIRS
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// One network mapping an image back to itself.
    Autoencoder { layers: Vec<LayerSpec> },
    /// The encoder must emit `2 * latent_dim` values.
    Elvae {
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        latent_dim: usize,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "one")]
        mc_samples: usize,
        #[serde(default = "default_scale_pairs")]
        scale_pairs: usize,
    },
    /// Refinement network over the bicubic upscale, trained for a fixed
    /// number of steps.
    SuperResolution {
        layers: Vec<LayerSpec>,
        scale: usize,
        steps: usize,
        #[serde(default = "yes")]
        residual: bool,
    },
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Defaults to the standard SSIM parameters (five scales for ms-ssim)
    /// with `dynamic_range` set to the span of `pixel_range`.
    #[serde(default)]
    pub params: Option<MetricParams>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

impl LossConfig {
    pub fn build(&self, range: PixelRange) -> Result<LossFunction, CliError> {
        let params = match &self.params {
            Some(p) => p.clone(),
            None => {
                let p = match self.kind {
                    LossKind::NegMsSsim => MetricParams::ms_ssim_default(),
                    _ => MetricParams::ssim_default(),
                };
                p.with_dynamic_range(range.span())
            }
        };
        params
            .validate()
            .map_err(|e| CliError::usage(format!("loss.params: {e}")))?;
        LossFunction::new(self.kind, params)
            .with_scale(self.scale)
            .map_err(|e| CliError::usage(format!("loss.scale: {e}")))
    }
}

fn default_grid() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default)]
    pub init: Init,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub stop: EarlyStop,
    /// Validation images shown in each reconstruction grid.
    #[serde(default = "default_grid")]
    pub grid_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    /// Random image pairs per metric check.
    pub pairs: usize,
    /// Square sizes for the SSIM checks.
    pub ssim_sizes: Vec<usize>,
    pub ms_ssim_size: usize,
    pub ms_ssim_scales: usize,
    /// Pixels sampled per MS-SSIM pair.
    pub ms_ssim_pixels: usize,
    pub eps: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            pairs: 3,
            ssim_sizes: vec![16, 24, 32],
            ms_ssim_size: 48,
            ms_ssim_scales: 3,
            ms_ssim_pixels: 200,
            eps: 1e-6,
            tolerance: 1e-5,
        }
    }
}

/// Where a set of sample vectors comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSource {
    /// Every decodable image in a directory, flattened.
    Dir { path: PathBuf },
    Synthetic {
        kind: SynthKind,
        count: usize,
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Points from `N(shift * 1, I)`.
    Gaussian {
        count: usize,
        dim: usize,
        shift: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Prior samples decoded by an EL-VAE checkpoint. Without a seed the
    /// run seed is used.
    Prior {
        checkpoint: PathBuf,
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl SampleSource {
    fn validate(&self, what: &str) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::usage(format!("{what}: {m}")));
        match self {
            SampleSource::Dir { path } if !path.is_dir() => {
                bad(format!("directory {} does not exist", path.display()))
            }
            SampleSource::Prior { checkpoint, .. } if !checkpoint.is_file() => bad(format!(
                "checkpoint {} does not exist",
                checkpoint.display()
            )),
            SampleSource::Synthetic { count, size, .. } if *count < 2 || *size == 0 => {
                bad("synthetic sets need at least 2 images of positive size".into())
            }
            SampleSource::Gaussian { count, dim, .. } if *count < 2 || *dim == 0 => {
                bad("gaussian sets need at least 2 points of positive dimension".into())
            }
            SampleSource::Prior { count, .. } if *count < 2 => {
                bad("prior sets need at least 2 samples".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub c: f64,
    pub samples: SampleSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub reference: SampleSource,
    pub candidates: Vec<Candidate>,
    /// Median heuristic seeded with the run seed when absent.
    #[serde(default)]
    pub bandwidth: Option<BandwidthPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrModelEntry {
    pub name: String,
    pub checkpoint: PathBuf,
}

fn default_sr_scale() -> usize {
    4
}
fn default_methods() -> Vec<String> {
    vec!["bicubic".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    pub hr_dir: PathBuf,
    #[serde(default = "default_sr_scale")]
    pub scale: usize,
    /// Pixels shaved from each side; the scale when absent.
    #[serde(default)]
    pub border: Option<usize>,
    #[serde(default)]
    pub y: YConvention,
    /// Any of `bicubic`, `nearest`, `ground_truth`.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub models: Vec<SrModelEntry>,
}

pub const SR_BASELINES: [&str; 3] = ["bicubic", "nearest", "ground_truth"];

impl SrConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.scale == 0 {
            return Err(CliError::usage("sr.scale must be at least 1"));
        }
        if !self.hr_dir.is_dir() {
            return Err(CliError::usage(format!(
                "sr.hr_dir {} does not exist",
                self.hr_dir.display()
            )));
        }
        let mut names: Vec<&str> = Vec::new();
        for m in &self.methods {
            if !SR_BASELINES.contains(&m.as_str()) {
                return Err(CliError::usage(format!(
                    "sr.methods: unknown method {m:?}, expected one of {SR_BASELINES:?}"
                )));
            }
            names.push(m);
        }
        for m in &self.models {
            if !m.checkpoint.is_file() {
                return Err(CliError::usage(format!(
                    "sr.models: checkpoint {} does not exist",
                    m.checkpoint.display()
                )));
            }
            names.push(&m.name);
        }
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(CliError::usage("sr: method names must be unique"));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Reads `path` if given, otherwise the all-default config, then applies
    /// the command-line overrides.
    pub fn resolve(
        path: Option<&Path>,
        seed: Option<u64>,
        out_dir: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(d) = out_dir {
            cfg.out_dir = Some(d.to_path_buf());
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::usage("no output directory: set out_dir or pass --out-dir"))
    }

    pub fn data(&self) -> Result<&DataSource, CliError> {
        let d = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no data block"))?;
        d.validate()
            .map_err(|e| CliError::usage(format!("data: {e}")))?;
        Ok(d)
    }

    /// Everything `train` needs, checked before any file is written.
    pub fn validate_train(&self) -> Result<(), CliError> {
        self.out_dir()?;
        self.data()?;
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no model block"))?;
        let loss = self
            .loss
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no loss block"))?;
        loss.build(self.pixel_range)?;
        let training = self
            .training
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no training block"))?;
        training
            .optimizer
            .validate()
            .map_err(|e| CliError::usage(format!("training.optimizer: {e}")))?;
        if training.stop.max_epochs == 0 {
            return Err(CliError::usage(
                "training.stop.max_epochs must be at least 1",
            ));
        }
        match model {
            ModelConfig::Autoencoder { layers } if layers.is_empty() => {
                return Err(CliError::usage("model.layers is empty"));
            }
            ModelConfig::Elvae {
                c,
                latent_dim,
                mc_samples,
                ..
            } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(CliError::usage("model.c must be a non-negative number"));
                }
                if *latent_dim == 0 || *mc_samples == 0 {
                    return Err(CliError::usage(
                        "model.latent_dim and model.mc_samples must be positive",
                    ));
                }
            }
            ModelConfig::SuperResolution { scale, layers, .. }
                if *scale == 0 || layers.is_empty() =>
            {
                return Err(CliError::usage(
                    "model.scale must be positive and model.layers non-empty",
                ));
            }
            _ => {}
        }
        if !matches!(model, ModelConfig::SuperResolution { .. })
            && !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0)
        {
            return Err(CliError::usage(
                "valid_fraction must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }

    pub fn validate_select(&self) -> Result<&SelectConfig, CliError> {
        let s = self
            .select
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no select block"))?;
        if s.candidates.len() < 2 {
            return Err(CliError::usage(format!(
                "select needs at least 2 candidates, got {}",
                s.candidates.len()
            )));
        }
        s.reference.validate("select.reference")?;
        for (i, c) in s.candidates.iter().enumerate() {
            if !c.c.is_finite() {
                return Err(CliError::usage(format!(
                    "select.candidates[{i}].c must be finite"
                )));
            }
            c.samples.validate(&format!("select.candidates[{i}]"))?;
        }
        if let Some(BandwidthPolicy::Fixed { value }) = s.bandwidth {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::usage("select.bandwidth.value must be positive"));
            }
        }
        Ok(s)
    }

    pub fn grad_check(&self) -> Result<GradCheckConfig, CliError> {
        let g = self.grad_check.clone().unwrap_or_default();
        if g.pairs == 0 || g.ssim_sizes.iter().any(|&s| s < 11) {
            return Err(CliError::usage(
                "grad_check: pairs must be positive and SSIM sizes at least 11",
            ));
        }
        if !(g.eps > 0.0 && g.tolerance > 0.0) {
            return Err(CliError::usage(
                "grad_check: eps and tolerance must be positive",
            ));
        }
        if percept_core::metrics::max_scales(g.ms_ssim_size, g.ms_ssim_size, 11) < g.ms_ssim_scales
            || g.ms_ssim_scales == 0
        {
            return Err(CliError::usage(format!(
                "grad_check: {0}x{0} cannot hold {1} MS-SSIM scales",
                g.ms_ssim_size, g.ms_ssim_scales
            )));
        }
        Ok(g)
    }
}
