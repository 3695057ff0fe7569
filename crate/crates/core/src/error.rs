//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline or its I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input data violates a documented invariant (wrong point count,
    /// non-finite coordinate, mismatched lengths, ...).
    #[error("{0}")]
    Data(String),

    /// The Kalman prediction-error objective has nothing to average over.
    #[error("objective undefined: no tracks")]
    NoTracks,

    /// Filesystem failure, annotated with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A record in a frame or ground-truth file failed to parse.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
