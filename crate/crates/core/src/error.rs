use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category; the CLI maps each to a stable exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A caller-supplied configuration value is out of range.
    Usage,
    /// Malformed, inconsistent, or mismatched input data.
    Data,
    /// Training produced a non-finite value.
    Numeric,
    /// The external judge could not be reached or answered badly.
    Transport,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed EMBD data: {0}")]
    Format(String),

    #[error("{0}")]
    Invalid(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("judge failure: {0}")]
    Judge(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Judge(_) => ErrorKind::Transport,
            Error::Io { .. } | Error::Format(_) | Error::Invalid(_) | Error::Dimension { .. } | Error::Parse { .. } => {
                ErrorKind::Data
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
