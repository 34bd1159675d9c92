use std::io;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed text input (edge lists, label files, config files).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed binary input; `offset` is the byte position that failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// An index or value outside its permitted interval.
    #[error("range error: {0}")]
    Range(String),

    /// A parameter combination the operation does not define.
    #[error("domain error: {0}")]
    Domain(String),

    /// Incompatible tensor or matrix dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Bad run configuration: unknown keys, bad values, missing inputs.
    #[error("config error: {0}")]
    Config(String),

    /// An API contract violation, e.g. a gradient check on a non-scalar.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }
}
