use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file could not be accepted.
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("edge {payer} -> {payee} at {timestamp} is newer than as_of {as_of}; pass clamp_future to treat it as age 0")]
    FutureEdge {
        payer: String,
        payee: String,
        timestamp: i64,
        as_of: i64,
    },

    #[error("unknown address: {0}")]
    UnknownAddress(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense solve limited to {limit} nodes, graph has {nodes}")]
    TooLargeForDense { nodes: usize, limit: usize },

    #[error("linear system is singular")]
    Singular,

    #[error("index is empty")]
    EmptyIndex,

    #[error("reputation did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn record(line: u64, message: impl Into<String>) -> Self {
        Error::Record {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
