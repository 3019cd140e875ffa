//! On-disk formats: JSON cohorts, TOML model configurations, binary sample
//! stores and JSON chain checkpoints, plus the reports built from them.

pub mod checkpoint;
pub mod cohort;
pub mod error;
pub mod fs;
pub mod model;
pub mod report;
pub mod store;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use cohort::{CohortFile, PatientEntry, PetPoint, PsaPoint, TruthSection, COHORT_SCHEMA_VERSION};
pub use error::{IoError, Result};
pub use model::ModelConfig;
pub use store::{SampleStore, StoreHeader, SUBJECT_FIELDS};
pub use report::{DecisionRequest, OptimalTimeReport, SummaryReport, WaicEntry, WhatIfReport, WhatIfRequest};
