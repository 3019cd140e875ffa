use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("patient {id}: {reason}")]
    InvalidPatient { id: String, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid decision config: {0}")]
    InvalidConfig(String),
    #[error("patient {0} has no observations")]
    EmptyHistory(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite pointwise log-likelihood at patient {patient}, {kind} observation {index}")]
    NonFinite {
        patient: String,
        kind: &'static str,
        index: usize,
    },
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
