use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument or malformed configuration.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was called before its prerequisite state existed.
    #[error("state error: {0}")]
    State(String),

    /// A non-finite value surfaced where the math requires finiteness.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Binary file did not match the expected layout.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Text file (CSV, config) did not parse.
    #[error("format error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
