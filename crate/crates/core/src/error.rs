use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its documented range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input violates an operation's precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A backward pass was requested with a tape recorded against older parameters.
    #[error("stale tape: recorded at parameter version {tape}, parameters are at version {current}")]
    StaleTape { tape: u64, current: u64 },

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
