use psma_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not find a finite starting point for patient {0}")]
    Initialization(String),
    #[error("numerical fault: {0}")]
    Numerical(String),
    #[error("run cancelled at iteration {0}")]
    Cancelled(u64),
}
