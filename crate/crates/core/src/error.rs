use thiserror::Error;

use crate::descriptors::DescriptorKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("descriptor kind mismatch: expected {expected:?}, got {got:?}")]
    KindMismatch {
        expected: DescriptorKind,
        got: DescriptorKind,
    },

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("memory is empty")]
    EmptyMemory,

    #[error("consolidation needs at least two clusters, found {0}")]
    TooFewClusters(usize),

    #[error("not enough data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("step {step} out of range for a stream of {total} steps")]
    StepOutOfRange { step: usize, total: usize },

    #[error("malformed PPM data: {0}")]
    Ppm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
