use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown tap `{0}`")]
    UnknownTap(String),
    #[error("duplicate tap `{0}`")]
    DuplicateTap(String),
    #[error("taps out of forward order: {0}")]
    TapOrder(String),
    #[error("provenance mismatch: {0}")]
    Provenance(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
