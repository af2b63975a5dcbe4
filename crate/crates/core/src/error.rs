use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the `smw` library.
#[derive(Debug, Error)]
pub enum SmwError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("atom count mismatch: expected {expected}, found {found}")]
    AtomCountMismatch { expected: usize, found: usize },

    #[error("non-finite coordinate at atom {atom}, axis {axis}")]
    NonFinite { atom: usize, axis: usize },

    #[error("direction is not unit length (norm {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("invalid simplex weights: {0}")]
    InvalidWeights(String),

    #[error(
        "instance too large for exhaustive search: N={n_atoms}, P={p_count} (limit N<=8, P<=5)"
    )]
    InstanceTooLarge { n_atoms: usize, p_count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("ragged rows: row {row} has {found} values, expected {expected}")]
    Shape {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SmwError>;

impl SmwError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SmwError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmwError::Io {
            path: path.into(),
            source,
        }
    }
}
