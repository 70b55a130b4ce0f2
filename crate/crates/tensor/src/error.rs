use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    Invalid { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward already ran on this graph; call reset_grads before running it again")]
    BackwardTwice,

    #[error("backward seed must be a scalar, got shape {0:?}")]
    NonScalarSeed(Vec<usize>),

    #[error("objective returned a non-finite value while perturbing coordinate {0}")]
    FiniteDiff(usize),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        detail: detail.into(),
    }
}
