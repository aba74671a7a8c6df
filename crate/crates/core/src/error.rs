use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Validity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training failed at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    #[error("edit failed at step {step}: {reason}")]
    Edit { step: usize, reason: String },
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Autodiff(#[from] shapeedit_autodiff::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
