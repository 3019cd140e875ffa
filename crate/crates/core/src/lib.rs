//! Hierarchical joint model of post-prostatectomy PSA growth and PET-PSMA
//! positivity, plus the posterior decision rule for the exam time.
//!
//! All model math is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the bottom of this file fix the scalar to `f64`, which is what the sampler
//! and the file formats use.

pub mod decision;
pub mod density;
pub mod error;
pub mod params;
pub mod patient;
pub mod samples;
pub mod scalar;
pub mod tau_prior;
pub mod trajectory;

pub use decision::{
    assurance, assurance_count, assurance_curve, coverage_report, credible_interval, optimal_time,
    optimal_time_from, pi_tau_samples, summarize_globals, waic, AssuranceCurve, CoverageReport,
    DecisionConfig, OptimalTimeResult, Truth, WaicResult,
};
pub use density::{
    hyper_logprior, joint_loglik, map_ig_hyper, random_effects_logpdf, PRIOR_VARIANCE,
};
pub use error::{ModelError, Result};
pub use params::{GlobalParams, LambdaHyper, LambdaMode, SubjectParams};
pub use patient::{PatientRecord, PetObs, PsaObs, MIN_PSA_OBS};
pub use samples::{ChainMeta, Draw, PatientDraw, PosteriorSamples};
pub use scalar::Real;
pub use tau_prior::{TauRegion, TauSupport};
pub use trajectory::{log_psa_trajectory, positivity_prob};

pub type Patient = PatientRecord<f64>;
pub type Subject = SubjectParams<f64>;
pub type Globals = GlobalParams<f64>;
pub type Samples = PosteriorSamples<f64>;
pub type Support = TauSupport<f64>;
pub type Decision = DecisionConfig<f64>;

pub type Patient32 = PatientRecord<f32>;
pub type Subject32 = SubjectParams<f32>;
pub type Globals32 = GlobalParams<f32>;
