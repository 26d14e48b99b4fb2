use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the PSNAP reader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte offset {offset}")]
    BadMagic { offset: usize },
    #[error("malformed header at byte offset {offset}: {message}")]
    BadHeader { offset: usize, message: String },
    #[error("truncated payload: expected {expected} bytes at offset {offset}, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-positive quadrature weight {value} at index {index} (byte offset {offset})")]
    NonPositiveWeight {
        offset: usize,
        index: usize,
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("storage error for {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("mass matrix error: {0}")]
    MassMatrix(String),

    #[error("ROM diverged: first non-finite coefficient at step {step}")]
    Divergence { step: usize },

    #[error("geodesic domain error: smallest singular value of the reference overlap is {singular_value:e}")]
    GeodesicDomain { singular_value: f64 },

    #[error("interpolation weight error: {0}")]
    Weight(String),

    #[error("MRPWI needs an odd number of modes, got {n_rank}; choose N_r = {} or {}", .n_rank - 1, .n_rank + 1)]
    Parity { n_rank: usize },

    #[error("undefined Kasner angle for column {column}: |<a,b>| = {magnitude:e} is below the relative threshold")]
    UndefinedAngle { column: usize, magnitude: f64 },

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("stability error: {0}")]
    Stability(String),

    #[error("degenerate truth: the reference snapshots have zero norm")]
    DegenerateTruth,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("case {index}: {source}")]
    Case {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_case(self, index: usize) -> Self {
        Error::Case {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs or usage).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. }
            | Error::GeodesicDomain { .. }
            | Error::UndefinedAngle { .. }
            | Error::MassMatrix(_)
            | Error::Stability(_)
            | Error::DegenerateTruth => true,
            Error::Case { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
