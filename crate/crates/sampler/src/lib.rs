//! Metropolis-within-Gibbs estimation of the PSA / PET-PSMA joint model.
//!
//! Each sweep updates every patient's scalar parameters by adaptive
//! random-walk Metropolis and its change point by a prior-independence move
//! plus a ramp walk, then draws the logistic coefficients exactly through
//! Pólya-gamma augmentation, then moves the hyperparameters. Patients own
//! their own random streams, so serial and parallel sweeps agree bit for bit.

pub mod adapt;
pub mod chain;
pub mod error;
pub mod hypers;
pub mod logistic;
pub mod pg;
pub mod refit;
pub mod subject;

pub use chain::{run_chain, AcceptanceRate, ChainCheckpoint, ChainConfig, Progress, Sampler};
pub use error::SamplerError;
pub use hypers::{HyperComponent, HyperState, ModelSpec};
pub use logistic::{update_logistic_block, LogisticConditional, LogisticData};
pub use pg::{pg_draw, pg_mean, pg_variance, PolyaGammaDraw};
pub use refit::{refit_subject, RefitBudget};
pub use subject::{update_subject_params, update_tau, SubjectAdapters, SubjectCoord};
