use std::path::PathBuf;

use clap::{Args, ValueEnum};
use percept_core::image::load_image;
use percept_core::losses::{mae, mse, psnr};
use percept_core::metrics::{max_scales, ms_ssim, ssim};
use percept_core::util::fmt_sig6;
use percept_core::{Image, MetricParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Psnr,
    Ssim,
    #[value(name = "ms-ssim")]
    MsSsim,
    Mse,
    Mae,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference image (PGM, PPM or PNG).
    pub reference: PathBuf,
    /// Image under test, same size as the reference.
    pub test: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "psnr,ssim,ms-ssim,mse,mae"
    )]
    pub metrics: Vec<Metric>,
    /// SSIM window side.
    #[arg(long, default_value_t = 11)]
    pub window: usize,
    /// MS-SSIM scales.
    #[arg(long, default_value_t = 5)]
    pub scales: usize,
}

fn load(path: &PathBuf) -> Result<Image, CliError> {
    load_image(path)
        .map(|i| i.into_luma())
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    let params = MetricParams::ssim_default().with_window(args.window);
    let ms_params = params.clone().with_scales(args.scales);
    ms_params
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let x = load(&args.reference)?;
    let y = load(&args.test)?;
    if x.dims() != y.dims() {
        return Err(CliError::usage(format!(
            "dimension mismatch: {} is {}x{}, {} is {}x{}",
            args.reference.display(),
            x.height(),
            x.width(),
            args.test.display(),
            y.height(),
            y.width()
        )));
    }
    let (h, w) = x.dims();
    let mut out = String::from("metric\tvalue\n");
    for m in &args.metrics {
        let (name, value) = match m {
            Metric::Psnr => ("psnr_db", psnr(&x, &y, 1.0)?.to_string()),
            Metric::Ssim => ("ssim", fmt_sig6(ssim(&x, &y, &params)?.value)),
            Metric::MsSsim => {
                let feasible = max_scales(h, w, args.window);
                if feasible < args.scales {
                    eprintln!(
                        "note: {h}x{w} supports at most {feasible} MS-SSIM scales, {} requested",
                        args.scales
                    );
                    ("ms_ssim", "n/a".to_string())
                } else {
                    ("ms_ssim", fmt_sig6(ms_ssim(&x, &y, &ms_params)?.value))
                }
            }
            Metric::Mse => ("mse", fmt_sig6(mse(&x, &y)?.0)),
            Metric::Mae => ("mae", fmt_sig6(mae(&x, &y)?.0)),
        };
        out.push_str(&format!("{name}\t{value}\n"));
    }
    print!("{out}");
    Ok(())
}
