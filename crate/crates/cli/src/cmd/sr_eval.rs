use std::path::PathBuf;

use clap::Args;
use percept_core::nn::ModelRole;
use percept_core::sr::{
    emit_report, evaluate_dir, render_markdown, EvalOptions, ReportFormat, SrError, SrMethod,
    SrModel,
};

use super::{create_dir, load_checkpoint};
use crate::config::{RunConfig, SrConfig, SrModelEntry};
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct SrEvalArgs {
    /// Run config with an sr block.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of HR images; overrides `sr.hr_dir`.
    #[arg(long)]
    pub hr_dir: Option<PathBuf>,
    /// Upscaling factor; overrides `sr.scale`.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Pixels shaved from each side; defaults to the scale.
    #[arg(long)]
    pub border: Option<usize>,
    /// Comma-separated baselines: bicubic, nearest, ground_truth.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// SR checkpoint evaluated as an extra method named `model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn resolve(args: &SrEvalArgs, cfg: &RunConfig) -> Result<SrConfig, CliError> {
    let mut sr = match (&cfg.sr, &args.hr_dir) {
        (Some(s), _) => s.clone(),
        (None, Some(dir)) => serde_json::from_value(serde_json::json!({ "hr_dir": dir }))
            .expect("hr_dir is the only required key"),
        (None, None) => {
            return Err(CliError::usage(
                "sr-eval needs --hr-dir or a config with an sr block",
            ))
        }
    };
    if let Some(d) = &args.hr_dir {
        sr.hr_dir = d.clone();
    }
    if let Some(s) = args.scale {
        sr.scale = s;
    }
    if args.border.is_some() {
        sr.border = args.border;
    }
    if let Some(m) = &args.methods {
        sr.methods = m.clone();
    }
    if let Some(ck) = &args.checkpoint {
        sr.models.push(SrModelEntry {
            name: "model".into(),
            checkpoint: ck.clone(),
        });
    }
    sr.validate()?;
    Ok(sr)
}

pub fn run(args: &SrEvalArgs, g: &Global) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_deref(), g.seed, g.out_dir.as_deref())?;
    let sr = resolve(args, &cfg)?;
    let out = cfg.out_dir()?;
    let mut methods: Vec<SrMethod> = sr
        .methods
        .iter()
        .map(|m| match m.as_str() {
            "bicubic" => SrMethod::Bicubic,
            "nearest" => SrMethod::Nearest,
            _ => SrMethod::GroundTruth,
        })
        .collect();
    for entry in &sr.models {
        let ck = load_checkpoint(&entry.checkpoint)?;
        if let ModelRole::SuperResolution { scale, .. } = ck.model {
            if scale != sr.scale {
                return Err(CliError::usage(format!(
                    "{} was trained for scale {scale}, evaluating at {}",
                    entry.checkpoint.display(),
                    sr.scale
                )));
            }
        }
        let model = SrModel::from_checkpoint(&ck)
            .map_err(|e| CliError::usage(format!("{}: {e}", entry.checkpoint.display())))?;
        methods.push(SrMethod::Model {
            name: entry.name.clone(),
            model,
        });
    }
    let opts = EvalOptions {
        scale: sr.scale,
        border: sr.border,
        y: sr.y,
    };
    let report = evaluate_dir(&sr.hr_dir, &methods, &opts, &mut |p, e| {
        eprintln!("warning: skipped {}: {e}", p.display())
    })
    .map_err(|e| match e {
        SrError::EmptyDir(_) => CliError::usage(e.to_string()),
        e => e.into(),
    })?;
    create_dir(out)?;
    emit_report(&report, ReportFormat::Csv, &out.join("sr_report.csv"))?;
    emit_report(&report, ReportFormat::Markdown, &out.join("sr_report.md"))?;
    print!("{}", render_markdown(&report));
    Ok(())
}
