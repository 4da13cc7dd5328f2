use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use percept_core::data::{load_dir, synthetic};
use percept_core::elvae::{sample_prior, ElVae};
use percept_core::mmd::{gaussian_samples, select_tradeoff, BandwidthPolicy, SampleSet};
use percept_core::util::fmt_sig6;
use percept_core::{Field, PixelRange};

use super::{create_dir, load_checkpoint, write_text};
use crate::config::{RunConfig, SampleSource};
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Run config with a select block.
    #[arg(long)]
    pub config: PathBuf,
}

/// Flattened samples in `[0,1]` pixel units, or raw points for the
/// Gaussian source.
fn load_samples(src: &SampleSource, run_seed: u64) -> Result<SampleSet, CliError> {
    let fields: Vec<Field> = match src {
        SampleSource::Gaussian {
            count,
            dim,
            shift,
            seed,
        } => {
            return Ok(gaussian_samples(*count, *dim, *shift, *seed)?);
        }
        SampleSource::Dir { path } => {
            let (ok, failed) = load_dir(path)?;
            for (p, e) in &failed {
                eprintln!("warning: skipped {}: {e}", p.display());
            }
            ok.into_iter()
                .map(|(_, img)| img.rescale_range(PixelRange::Unit).into_field())
                .collect()
        }
        SampleSource::Synthetic {
            kind,
            count,
            size,
            seed,
        } => synthetic(*kind, *count, *size, *seed),
        SampleSource::Prior {
            checkpoint,
            count,
            seed,
        } => {
            let ck = load_checkpoint(checkpoint)?;
            let model = ElVae::from_checkpoint(&ck)
                .map_err(|e| CliError::usage(format!("{}: {e}", checkpoint.display())))?;
            let range = ck.pixel_range.unwrap_or(PixelRange::Unit);
            sample_prior(
                &model.decoder,
                model.image_dims(),
                *count,
                seed.unwrap_or(run_seed),
                range,
            )?
            .into_iter()
            .map(|img| img.rescale_range(PixelRange::Unit).into_field())
            .collect()
        }
    };
    Ok(SampleSet::from_fields(&fields)?)
}

pub fn run(args: &SelectArgs, g: &Global) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(Some(&args.config), g.seed, g.out_dir.as_deref())?;
    let sel = cfg.validate_select()?;
    let reference = load_samples(&sel.reference, cfg.seed)?;
    let candidates = sel
        .candidates
        .iter()
        .map(|c| Ok((c.c, load_samples(&c.samples, cfg.seed)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let policy = sel
        .bandwidth
        .unwrap_or(BandwidthPolicy::Median { seed: cfg.seed });
    let s = select_tradeoff(&reference, &candidates, policy)?;

    let mut table = String::from("c,mmd2\n");
    for (c, v) in &s.mmd2 {
        let _ = writeln!(table, "{},{}", fmt_sig6(*c), fmt_sig6(*v));
    }
    let mut pairs = String::from("c_i,c_j,relative_similarity\n");
    for (a, b, v) in &s.pairwise {
        let _ = writeln!(pairs, "{},{},{}", fmt_sig6(*a), fmt_sig6(*b), fmt_sig6(*v));
    }
    println!("bandwidth {}", fmt_sig6(s.bandwidth));
    print!("{table}{pairs}");
    println!("chosen C = {}", fmt_sig6(s.chosen_label));
    if let Some(out) = &cfg.out_dir {
        create_dir(out)?;
        write_text(&out.join("selection.csv"), &table)?;
        write_text(&out.join("pairwise.csv"), &pairs)?;
        let chosen = format!(
            "chosen_c,bandwidth\n{},{}\n",
            fmt_sig6(s.chosen_label),
            fmt_sig6(s.bandwidth)
        );
        write_text(&out.join("chosen.csv"), &chosen)?;
    }
    Ok(())
}
