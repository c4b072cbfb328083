use std::path::PathBuf;

/// Unified error type for the simulation crate.
///
/// Every fallible operation reports through this enum so callers can match on
/// the failure class instead of parsing strings.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar parameter is out of its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Two grids that must share a shape do not.
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimension {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// A mask or block layout does not fit the requested grid.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A file does not conform to its declared format. `offset` is the byte
    /// position at which the problem was detected.
    #[error("format error in {path} at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// Not enough samples to finalize a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A correlation or width was requested on constant data.
    #[error("undefined variance: {0}")]
    UndefinedVariance(String),

    /// Filesystem failure, tagged with the path involved. The underlying
    /// cause is carried as the error source rather than in the message, so
    /// chain-printing reporters show it exactly once.
    #[error("failed to access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
