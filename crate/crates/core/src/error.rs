use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid layer partition: {0}")]
    InvalidPartition(String),

    #[error("invalid compressor: {0}")]
    InvalidCompressor(String),

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid algorithm configuration: {0}")]
    InvalidAlgorithm(String),

    #[error("mirror desynchronized for client {client} at round {round}")]
    MirrorDesync { client: usize, round: usize },

    #[error("expected {expected} uploads, got {actual}")]
    UploadCount { expected: usize, actual: usize },

    #[error("invalid run configuration: {0}")]
    InvalidRun(String),

    #[error("verifier precondition failed: {0}")]
    Precondition(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
