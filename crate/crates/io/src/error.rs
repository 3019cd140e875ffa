use std::path::PathBuf;

use psma_core::ModelError;
use psma_sampler::SamplerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Invalid content, located by a JSON-pointer-like path.
    #[error("{location}: {message}")]
    Schema { location: String, message: String },
    #[error("{0}")]
    Format(String),
    #[error("unknown patient {0}")]
    UnknownPatient(String),
    #[error("checksum mismatch: file is corrupt or truncated")]
    Checksum,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

impl IoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema { location: location.into(), message: message.into() }
    }

    /// Whether the failure is in reading or writing bytes rather than in
    /// their content.
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
