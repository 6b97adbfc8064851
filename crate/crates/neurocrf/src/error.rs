//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input dimensions do not match the model (wrong feature width,
    /// wrong label count). Surfaced separately so the CLI can map it
    /// to its own exit status.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A line of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// The records of a file parsed individually but do not assemble into
    /// a consistent whole (e.g. a broken successor chain).
    #[error("structural error: {0}")]
    Structure(String),

    /// Score calibration cannot produce a threshold because the scores
    /// carry no usable signal (all identical, or zero slope).
    #[error("degenerate fit: scores admit no separating threshold")]
    DegenerateFit,

    /// A quantity is undefined on the given input (empty support).
    #[error("undefined: {0}")]
    Undefined(String),

    /// Not enough data to perform the requested split or experiment.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An experiment unit cannot run and should be skipped with a notice
    /// (e.g. a word with no same-length peers to draw impostors from).
    #[error("experiment skipped: {0}")]
    ExperimentSkip(String),

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
