//! Thinned posterior draws.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::{GlobalParams, SubjectParams};
use crate::patient::PatientRecord;
use crate::scalar::Real;

/// How a set of draws was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
}

impl ChainMeta {
    /// Number of retained draws, `(iterations - burn_in) / thinning`.
    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// One joint posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw<T> {
    /// Subject parameters in cohort order.
    pub subjects: Vec<SubjectParams<T>>,
    pub globals: GlobalParams<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples<T> {
    pub meta: ChainMeta,
    pub patient_ids: Vec<String>,
    pub draws: Vec<Draw<T>>,
}

/// Everything needed to rebuild one patient's trajectory and positivity
/// curve from a single draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientDraw<T> {
    pub subject: SubjectParams<T>,
    pub beta0: T,
    pub beta1: T,
    pub beta2: T,
}

impl<T: Real> PosteriorSamples<T> {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn patient_index(&self, id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == id)
    }

    /// Per-draw parameters for patient `idx`, whose record supplies the
    /// logistic design row.
    pub fn patient_draws(&self, idx: usize, record: &PatientRecord<T>) -> Vec<PatientDraw<T>> {
        self.draws
            .iter()
            .map(|d| PatientDraw {
                subject: d.subjects[idx],
                beta0: d.globals.beta0(&record.cov_beta),
                beta1: d.globals.beta1,
                beta2: d.globals.beta2,
            })
            .collect()
    }

    /// Series of one scalar extracted from patient `idx` across draws.
    pub fn subject_series(&self, idx: usize, f: impl Fn(&SubjectParams<T>) -> T) -> Vec<T> {
        self.draws.iter().map(|d| f(&d.subjects[idx])).collect()
    }

    /// Checks the stored-draw invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.patient_ids.len();
        for (b, d) in self.draws.iter().enumerate() {
            if d.subjects.len() != n {
                return Err(ModelError::Dimension(format!(
                    "draw {b} has {} subjects, expected {n}",
                    d.subjects.len()
                )));
            }
            d.globals.validate()?;
            for sp in &d.subjects {
                sp.validate()?;
            }
        }
        Ok(())
    }
}
