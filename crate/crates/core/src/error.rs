use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("dataset has no target states")]
    Unlabeled,

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {detail}")]
    Image { path: PathBuf, detail: String },
}

impl Error {
    /// Short stable tag used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::BasisMismatch(_) => "basis-mismatch",
            Error::Unlabeled => "unlabeled-dataset",
            Error::Format { .. } => "malformed-file",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
