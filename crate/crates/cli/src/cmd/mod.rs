pub mod compare;
pub mod encode;
pub mod grad_check;
pub mod sample;
pub mod select;
pub mod sr_eval;
pub mod synth;
pub mod train;

use std::path::Path;

use percept_core::nn::Checkpoint;

use crate::error::CliError;

/// A checkpoint named on the command line or in a config. Failing to read
/// it is a usage error: nothing has run yet.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path)
        .map_err(|e| CliError::usage(format!("checkpoint {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
