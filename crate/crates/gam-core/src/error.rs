//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GamError {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("a point cloud needs at least one point")]
    EmptyCloud,

    #[error("requested {requested} centers but the cloud has only {available} points")]
    TooManyCenters { requested: usize, available: usize },

    #[error("no point within radius {radius} of center {center}")]
    EmptyBall { center: usize, radius: f64 },

    #[error("k = {k} exceeds the cloud size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backward requires a scalar loss node, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("parse error in {path}: {message}")]
    ParseError { path: String, message: String },

    #[error("inconsistent column count in {path}: line {line} has {got} fields, expected {expected}")]
    InconsistentColumns {
        path: String,
        line: usize,
        got: usize,
        expected: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GamError>;
