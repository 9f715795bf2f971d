use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Core(#[from] featsent_core::Error),
    #[error("store is locked: {0}")]
    Locked(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Exit codes: 2 validation, 3 missing artifact, 4 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(featsent_core::Error::InvalidConfig(_)) => 2,
            CliError::MissingArtifact(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
