use std::path::PathBuf;

/// Toolkit-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples to fit a GP, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("covariance matrix is not positive definite even with jitter {max_jitter}")]
    IllConditioned { max_jitter: f64 },

    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),

    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("traces cannot be aggregated: {0}")]
    Aggregation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
