use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Malformed, missing or inconsistent data files.
    Data,
    /// Numerical failure (rank, definiteness, divergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("label sets differ; symmetric difference: {}", .0.join(", "))]
    LabelMismatch(Vec<String>),

    #[error("unknown label `{0}`")]
    MissingLabel(String),

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("invalid class split: {0}")]
    Split(String),

    #[error("insufficient capacity: {0}")]
    Capacity(String),

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below tolerance {tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("requested dimension {requested} exceeds numerical rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) => ErrorKind::Usage,
            Error::DimMismatch { .. }
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::LabelMismatch(_)
            | Error::MissingLabel(_)
            | Error::DuplicateLabel(_)
            | Error::Split(_)
            | Error::Capacity(_) => ErrorKind::Data,
            Error::NotPsd { .. }
            | Error::Rank { .. }
            | Error::Degenerate(_)
            | Error::Divergence { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimMismatch {
            what: what.into(),
            expected,
            got,
        }
    }
}
