use percept_core::losses::LossError;
use percept_core::mmd::MmdError;
use percept_core::sr::SrError;
use percept_core::{ImageError, MetricError, NnError};

/// A failed command. The variant decides the exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, a bad config or inputs that fail validation. Exit 2.
    #[error("{0}")]
    Usage(String),
    /// Anything that goes wrong once work has started. Exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    ImageError,
    MetricError,
    NnError,
    LossError,
    MmdError,
    SrError,
    std::io::Error,
    csv::Error
);
