use std::path::PathBuf;

use gla_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlaError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("detections reference unknown frame ids {0:?}")]
    UnknownFrames(Vec<usize>),
    #[error("non-finite loss at step {step} (batch frames {frames:?}): {detail}")]
    NonFiniteLoss {
        step: usize,
        frames: Vec<usize>,
        detail: String,
    },
}

impl GlaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from user input rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Invalid(_))
    }
}

pub type Result<T, E = GlaError> = std::result::Result<T, E>;
