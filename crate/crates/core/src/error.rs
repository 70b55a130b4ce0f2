use jeap_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("evaluation protocol error: {0}")]
    Protocol(String),
    #[error("non-finite loss at step {step} (batch seed {batch_seed:#018x})")]
    NonFiniteLoss { step: u64, batch_seed: u64 },
    #[error("container format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> CoreError {
    CoreError::Config {
        line: None,
        msg: msg.into(),
    }
}

pub(crate) fn input_err(msg: impl Into<String>) -> CoreError {
    CoreError::Input(msg.into())
}
