use clap::Args;
use percept_core::data::{standin_photo, synthetic, SynthKind};
use percept_core::image::{save_image, save_rgb};
use percept_core::{Image, PixelRange};

use super::create_dir;
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// edges, discs, gratings, noise, mixed, or photo for RGB stand-in photographs.
    #[arg(long)]
    pub kind: String,
    /// Number of images.
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
}

pub fn run(args: &SynthArgs, g: &Global) -> Result<(), CliError> {
    let out = g
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::usage("synth needs --out-dir"))?;
    if args.size == 0 {
        return Err(CliError::usage("--size must be positive"));
    }
    let seed = g.seed.unwrap_or(0);
    let photo = args.kind == "photo";
    let kind = if photo {
        None
    } else {
        Some(args.kind.parse::<SynthKind>().map_err(CliError::usage)?)
    };
    create_dir(out)?;
    match kind {
        None => {
            for i in 0..args.count {
                save_rgb(
                    &standin_photo(args.size, seed, i),
                    out.join(format!("photo_{i:03}.png")),
                )?;
            }
        }
        Some(k) => {
            for (i, f) in synthetic(k, args.count, args.size, seed)
                .into_iter()
                .enumerate()
            {
                let img = Image::clamped(f, PixelRange::Unit);
                save_image(&img, out.join(format!("{}_{i:05}.png", k.name())))?;
            }
        }
    }
    println!("wrote {} images to {}", args.count, out.display());
    Ok(())
}
