use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (bad distance, wrong
    /// action length, non-square cost matrix, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A scenario or hyperparameter record failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A training loop produced a non-finite loss and was aborted.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),

    #[error("checkpoint format: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
