//! Per-patient observation records.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Minimum PSA series length: the change-point prior needs the first two and
/// the last two PSA times to be distinct.
pub const MIN_PSA_OBS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsaObs<T> {
    /// Months since prostatectomy.
    pub t: T,
    /// PSA in ng/mL.
    pub y: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetObs<T> {
    pub t: T,
    /// `true` for a positive exam.
    pub z: bool,
}

/// One patient's covariate rows and observation series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord<T> {
    pub id: String,
    /// Design row for the mean of `log μ` (intercept first).
    pub cov_mu: Vec<T>,
    /// Design row for the mean of `log γ`.
    pub cov_gamma: Vec<T>,
    /// Design row for the logistic intercept `β₀ = cov_beta · α_β`.
    pub cov_beta: Vec<T>,
    pub psa_obs: Vec<PsaObs<T>>,
    pub pet_obs: Vec<PetObs<T>>,
}

fn strictly_increasing<T: Real>(ts: impl Iterator<Item = T>) -> bool {
    let mut prev = T::zero();
    for t in ts {
        if !(t > prev) || !t.is_finite() {
            return false;
        }
        prev = t;
    }
    true
}

impl<T: Real> PatientRecord<T> {
    /// Checks every record invariant the model relies on.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| ModelError::InvalidPatient {
            id: self.id.clone(),
            reason,
        };
        if self.psa_obs.len() < MIN_PSA_OBS {
            return Err(fail(format!(
                "needs at least {MIN_PSA_OBS} PSA observations, has {}",
                self.psa_obs.len()
            )));
        }
        if !strictly_increasing(self.psa_obs.iter().map(|o| o.t)) {
            return Err(fail("PSA times must be positive and strictly increasing".into()));
        }
        if let Some(bad) = self.psa_obs.iter().find(|o| !(o.y > T::zero()) || !o.y.is_finite()) {
            return Err(fail(format!("PSA value {:?} is not positive", bad.y)));
        }
        if !strictly_increasing(self.pet_obs.iter().map(|o| o.t)) {
            return Err(fail("PET times must be positive and strictly increasing".into()));
        }
        let all_cov = self.cov_mu.iter().chain(&self.cov_gamma).chain(&self.cov_beta);
        if all_cov.into_iter().any(|c| !c.is_finite()) {
            return Err(fail("covariates must be finite".into()));
        }
        Ok(())
    }

    /// Largest observation time over both series.
    pub fn last_time(&self) -> Option<T> {
        let psa = self.psa_obs.last().map(|o| o.t);
        let pet = self.pet_obs.last().map(|o| o.t);
        match (psa, pet) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// Total number of observations (PSA plus PET).
    pub fn n_obs(&self) -> usize {
        self.psa_obs.len() + self.pet_obs.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> PatientRecord<f64> {
        PatientRecord {
            id: "p".into(),
            cov_mu: vec![1.0],
            cov_gamma: vec![1.0],
            cov_beta: vec![1.0],
            psa_obs: (1..=4).map(|t| PsaObs { t: t as f64, y: 0.5 }).collect(),
            pet_obs: vec![PetObs { t: 10.0, z: true }],
        }
    }

    #[test]
    fn valid_record_passes() {
        record().validate().unwrap();
        let mut r = record();
        r.pet_obs.clear();
        r.validate().unwrap();
        assert_eq!(r.last_time(), Some(4.0));
        assert_eq!(record().last_time(), Some(10.0));
    }

    #[test]
    fn rejects_short_series_and_bad_values() {
        let mut r = record();
        r.psa_obs.pop();
        assert!(r.validate().is_err());

        let mut r = record();
        r.psa_obs[2].y = 0.0;
        assert!(r.validate().is_err());

        let mut r = record();
        r.psa_obs[2].t = 2.0;
        assert!(r.validate().is_err());

        let mut r = record();
        r.psa_obs[0].t = 0.0;
        assert!(r.validate().is_err());

        let mut r = record();
        r.cov_beta[0] = f64::NAN;
        assert!(r.validate().is_err());
    }
}
