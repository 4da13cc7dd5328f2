//! Feed-forward networks over a flat parameter vector, with reverse-mode
//! gradients driven by an externally supplied output gradient.

mod checkpoint;
mod layer;
mod network;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, ModelRole, NetworkRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layer::{Activation, LayerSpec, Padding, Shape};
pub use network::{encode, Gradients, Init, Mode, Network, Tape};
pub use optim::{optimizer_step, optimizer_update, OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{
    train_autoencoder, train_autoencoder_with, EarlyStop, EpochRecord, TrainConfig, TrainReport,
};

#[allow(unused_imports)]
pub(crate) use train::{common_dims, fit, Objective};

use crate::losses::LossError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer {index} ({layer}) cannot accept input {input}: {reason}")]
    IncompatibleShape {
        index: usize,
        layer: &'static str,
        input: Shape,
        reason: String,
    },
    #[error("input has {got} values, network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite activation at layer {index} ({layer})")]
    NonFinite { index: usize, layer: &'static str },
    #[error("tape was recorded against different parameters")]
    StaleTape,
    #[error("gradient has {got} values, expected {expected}")]
    GradientLength { expected: usize, got: usize },
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite parameter at index {index}")]
    NonFiniteParameter { index: usize },
    #[error("{what} has {got} values, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("layer index {index} out of range for a {layers}-layer network")]
    LayerIndex { index: usize, layers: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: loss {value}")]
    Diverged { epoch: usize, value: f64 },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::image::ImageError> for NnError {
    fn from(e: crate::image::ImageError) -> Self {
        NnError::Loss(e.into())
    }
}
