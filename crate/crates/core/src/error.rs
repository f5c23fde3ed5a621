use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A documented precondition of a schedule or theorem does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The information gain of the evaluated policy is zero.
    #[error("degenerate information ratio: information gain is zero")]
    DegenerateRatio,

    /// The sampler target is not finite at its starting point.
    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
