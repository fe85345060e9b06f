use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(
        "pressure solve did not converge after {iterations} iterations (residual {residual:e})"
    )]
    PoissonNotConverged { iterations: usize, residual: f64 },

    #[error("patch at {center:?} does not fit in grid {dims:?}")]
    PatchOutOfBounds {
        center: Vec<usize>,
        dims: Vec<usize>,
    },

    #[error("missing history: frame {frame} needs {needed} previous frames")]
    MissingHistory { frame: usize, needed: usize },

    #[error("sampling reached only {achieved} of {requested} patch pairs")]
    SamplingExhausted { achieved: usize, requested: usize },

    #[error("singular least-squares system on active set of size {0}")]
    Singular(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("fine cell {0:?} is not covered by any patch")]
    Uncovered(Vec<usize>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
