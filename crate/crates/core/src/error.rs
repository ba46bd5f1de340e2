use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch,
    /// missing forward cache, empty batch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The analytic stepper produced a non-finite state.
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A referenced checkpoint or dataset does not exist.
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    /// A persisted file has an unsupported schema or version.
    #[error("schema error: {0}")]
    Schema(String),

    /// Training produced non-finite values and was rolled back.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Data collection produced nothing usable.
    #[error("no usable data: {0}")]
    NoData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
