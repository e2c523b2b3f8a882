//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural argument violated a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// An index addressed a branch, slot or afferent that does not exist.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A data file could not be parsed. Carries the 1-based line it failed on.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A config value was rejected. `path` is the dotted field path.
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
