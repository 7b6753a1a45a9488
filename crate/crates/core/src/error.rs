//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data (ragged CSV row, unparseable cell).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input disagrees with the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Dataset too small for the requested operation.
    #[error("size error: {0}")]
    Size(String),

    /// A caller-side contract was violated.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
