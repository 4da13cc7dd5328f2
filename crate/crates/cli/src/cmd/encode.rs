use std::path::PathBuf;

use clap::Args;
use percept_core::data::{to_range, DataSource};
use percept_core::elvae::ElVae;
use percept_core::nn::{encode, ModelRole, Network};
use percept_core::util::fmt_sig6;
use percept_core::{Field, PixelRange};

use super::{create_dir, load_checkpoint};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::Global;

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Autoencoder or EL-VAE checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image directory; overrides the config data block.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run config; its data block is used when --data is absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV; `<out-dir>/features.csv` when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Autoencoder layer to read; the narrowest layer when absent.
    #[arg(long)]
    pub layer: Option<usize>,
}

/// The narrowest layer, the later one on ties so a binarized code wins
/// over the dense layer feeding it.
fn bottleneck(net: &Network) -> usize {
    (0..net.num_layers())
        .min_by_key(|&i| (net.layer_shape(i).expect("in range").len(), usize::MAX - i))
        .expect("networks have layers")
}

pub fn run(args: &EncodeArgs, g: &Global) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_deref(), g.seed, g.out_dir.as_deref())?;
    let source = match &args.data {
        Some(p) => DataSource::Dir { path: p.clone() },
        None => cfg.data()?.clone(),
    };
    source.validate().map_err(CliError::usage)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => cfg.out_dir()?.join("features.csv"),
    };
    let ck = load_checkpoint(&args.checkpoint)?;
    let range = ck.pixel_range.unwrap_or(PixelRange::Unit);
    let named = source.load()?;
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let images: Vec<Field> = to_range(
        &named.into_iter().map(|(_, f)| f).collect::<Vec<_>>(),
        range,
    );

    let (dim, rows) = match ck.model {
        ModelRole::Autoencoder => {
            let net = ck.network("autoencoder")?;
            let layer = args.layer.unwrap_or_else(|| bottleneck(&net));
            let shape = net
                .layer_shape(layer)
                .map_err(|e| CliError::usage(format!("--layer: {e}")))?;
            (shape.len(), encode(&net, &images, layer)?)
        }
        ModelRole::Elvae { .. } => {
            if args.layer.is_some() {
                return Err(CliError::usage(
                    "--layer applies to autoencoder checkpoints only",
                ));
            }
            let model = ElVae::from_checkpoint(&ck)?;
            let rows = images
                .iter()
                .map(|x| Ok(model.posterior(x)?.mu))
                .collect::<Result<Vec<_>, CliError>>()?;
            (model.latent_dim(), rows)
        }
        ref other => {
            return Err(CliError::usage(format!(
                "{}: cannot encode with a {other:?} checkpoint",
                args.checkpoint.display()
            )))
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(&out)?;
    let header: Vec<String> = std::iter::once("name".to_string())
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect();
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(&rows) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(|v| fmt_sig6(*v))))?;
    }
    w.flush()?;
    println!(
        "wrote {} rows x {dim} features to {}",
        rows.len(),
        out.display()
    );
    Ok(())
}
