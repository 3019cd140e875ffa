//! Fast per-patient refit for updated histories: the globals stay at their
//! stored draws and only one patient's parameters are moved.

use rand::Rng;
use serde::{Deserialize, Serialize};

use psma_core::{Draw, PatientRecord, PosteriorSamples, SubjectParams, TauRegion, TauSupport};

use crate::adapt::{AdaptSettings, Phase};
use crate::chain::{initial_subject, patient_rng};
use crate::error::SamplerError;
use crate::subject::{update_subject_params, update_tau, SubjectAdapters, SweepCtx};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefitBudget {
    /// Number of stored draws to start from, evenly spaced.
    pub draws: usize,
    /// Fixed-step sweeps per starting draw.
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for RefitBudget {
    fn default() -> Self {
        Self { draws: 200, sweeps: 200, seed: 0 }
    }
}

fn spaced(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    (0..k).map(|j| j * n / k).collect()
}

/// Re-estimates one patient's parameters under an updated history.
///
/// `index` locates the patient in `samples` (if it was part of the fit);
/// `steps` are the frozen step sizes for that patient. Returns a
/// single-patient sample set whose draws pair each refitted subject state
/// with the globals it was conditioned on.
pub fn refit_subject(
    samples: &PosteriorSamples<f64>,
    index: Option<usize>,
    patient: &PatientRecord<f64>,
    steps: Option<[f64; 6]>,
    budget: &RefitBudget,
) -> Result<PosteriorSamples<f64>, SamplerError> {
    patient.validate()?;
    if budget.draws == 0 {
        return Err(SamplerError::InvalidConfig("refit budget needs at least one draw".into()));
    }
    if samples.is_empty() {
        return Err(SamplerError::InvalidConfig("no stored draws to refit from".into()));
    }
    let support = TauSupport::from_patient(patient)?;
    let base_adapters = steps.map(SubjectAdapters::from_steps).unwrap_or_default();
    let ctx = SweepCtx { iteration: 0, phase: Phase::Sampling, adapt: AdaptSettings::default() };
    let fallback = initial_subject(patient, &support);
    let mut rng = patient_rng(budget.seed, 0);

    let mut draws = Vec::with_capacity(budget.draws.min(samples.len()));
    for b in spaced(samples.len(), budget.draws) {
        let source = &samples.draws[b];
        let g = &source.globals;
        let mut sp: SubjectParams<f64> = index.map(|i| source.subjects[i]).unwrap_or(fallback);
        if support.region(sp.tau) == TauRegion::Outside {
            sp.tau = support.quantile(rng.random::<f64>());
        }
        let mut adapters = base_adapters.clone();
        for _ in 0..budget.sweeps {
            sp = update_subject_params(&mut rng, patient, &sp, g, &mut adapters, &ctx);
            sp.tau = update_tau(&mut rng, patient, &sp, g, &support, &mut adapters, &ctx);
        }
        draws.push(Draw { subjects: vec![sp], globals: g.clone() });
    }
    Ok(PosteriorSamples { meta: samples.meta, patient_ids: vec![patient.id.clone()], draws })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        assert_eq!(spaced(10, 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(spaced(3, 5), vec![0, 1, 2]);
        assert_eq!(spaced(5000, 1000).len(), 1000);
    }
}
