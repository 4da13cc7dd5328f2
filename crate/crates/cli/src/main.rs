use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod cmd;
mod config;
mod error;
mod grid;

use error::CliError;

/// Perceptual image metrics, toy autoencoders and super-resolution evaluation.
#[derive(Debug, Parser)]
#[command(name = "percept", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print PSNR, SSIM, MS-SSIM, MSE and MAE between two images.
    Compare(cmd::compare::CompareArgs),
    /// Check analytic gradients against central finite differences.
    GradCheck(cmd::grad_check::GradCheckArgs),
    /// Train an autoencoder, EL-VAE or SR refinement network.
    Train(cmd::train::TrainArgs),
    /// Pick the trade-off constant C whose samples best match a reference.
    SelectC(cmd::select::SelectArgs),
    /// Decode prior samples from an EL-VAE checkpoint.
    Sample(cmd::sample::SampleArgs),
    /// Evaluate upscaling methods on a directory of HR images.
    SrEval(cmd::sr_eval::SrEvalArgs),
    /// Write bottleneck features for a dataset to CSV.
    Encode(cmd::encode::EncodeArgs),
    /// Write synthetic images or stand-in photos.
    Synth(cmd::synth::SynthArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Compare(a) => cmd::compare::run(&a),
        Command::GradCheck(a) => cmd::grad_check::run(&a, g),
        Command::Train(a) => cmd::train::run(&a, g),
        Command::SelectC(a) => cmd::select::run(&a, g),
        Command::Sample(a) => cmd::sample::run(&a, g),
        Command::SrEval(a) => cmd::sr_eval::run(&a, g),
        Command::Encode(a) => cmd::encode::run(&a, g),
        Command::Synth(a) => cmd::synth::run(&a, g),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on bad flags by itself.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
