use thiserror::Error;

/// Errors raised by tensor construction, operators and the autodiff tape.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        axis: String,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: expected rank {expected}, got rank {actual}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: output extent along {axis} is not integral ({numerator} / {stride})")]
    NonIntegralExtent {
        op: &'static str,
        axis: &'static str,
        numerator: usize,
        stride: usize,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("variable belongs to a different graph or was never recorded")]
    UnrecordedVar,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn check_extent(
    op: &'static str,
    axis: impl Into<String>,
    expected: usize,
    actual: usize,
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            axis: axis.into(),
            expected,
            actual,
        })
    }
}

pub(crate) fn check_rank(op: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(TensorError::RankMismatch {
            op,
            expected,
            actual,
        })
    }
}
