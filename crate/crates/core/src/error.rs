use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the attribution toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied inconsistent or out-of-range arguments.
    #[error("invalid input: {0}")]
    Input(String),

    /// The model basis cannot be inverted at the requested redshift.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A spectrum or result file could not be parsed.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// A configuration file was malformed.
    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }
}
