use std::path::PathBuf;

use clap::Args;
use percept_core::elvae::{sample_prior, ElVae};
use percept_core::image::save_image;
use percept_core::PixelRange;

use super::{create_dir, load_checkpoint};
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// EL-VAE checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of samples.
    #[arg(short, long)]
    pub n: usize,
}

pub fn run(args: &SampleArgs, g: &Global) -> Result<(), CliError> {
    let out = g
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::usage("sample needs --out-dir"))?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let model = ElVae::from_checkpoint(&ck)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.checkpoint.display())))?;
    let seed = g.seed.unwrap_or(ck.seed);
    let range = ck.pixel_range.unwrap_or(PixelRange::Unit);
    let samples = sample_prior(&model.decoder, model.image_dims(), args.n, seed, range)?;
    if !samples.is_empty() {
        create_dir(out)?;
    }
    for (i, img) in samples.iter().enumerate() {
        save_image(img, out.join(format!("sample_{i:03}.png")))?;
    }
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}
