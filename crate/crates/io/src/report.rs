//! Summary, decision and what-if reports. The command line and the HTTP
//! service both serialize these structs, so the same store and settings give
//! the same bytes through either front end.

use psma_core::decision::{
    credible_interval, quantile_sorted, subject_families, summarize_globals, GlobalSummary, IndividualCoverage,
};
use psma_core::{
    coverage_report, log_psa_trajectory, optimal_time, waic, DecisionConfig, PatientDraw, PatientRecord,
    PosteriorSamples, PsaObs, Truth,
};
use psma_sampler::{refit_subject, RefitBudget};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortFile, PsaPoint};
use crate::error::{IoError, Result};
use crate::store::SampleStore;

/// Credible level of the τ interval and the trajectory band.
pub const BAND_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub assurance: f64,
    /// Draws with `π(t) > π*` and `τ < t`.
    pub count: usize,
}

/// Pointwise posterior band of the PSA trajectory, in ng/mL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub t: f64,
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalTimeReport {
    pub patient: String,
    pub pi_star: f64,
    pub rho: f64,
    pub grid_step: f64,
    pub horizon: f64,
    pub draws: usize,
    /// Start of the search: the last observation time.
    pub earliest: f64,
    pub t_star: Option<f64>,
    pub assurance_at_t_star: Option<f64>,
    pub tau_interval: [f64; 2],
    pub curve: Vec<CurvePoint>,
    pub band: Vec<BandPoint>,
}

/// Decision settings as they arrive from a user; unset fields take the
/// library defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub pi_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl DecisionRequest {
    pub fn config(&self) -> Result<DecisionConfig<f64>> {
        let mut cfg = DecisionConfig::new(self.pi_star);
        cfg.rho = self.rho.unwrap_or(cfg.rho);
        cfg.grid_step = self.grid_step.unwrap_or(cfg.grid_step);
        cfg.horizon = self.horizon.unwrap_or(cfg.horizon);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn patient_draws(samples: &PosteriorSamples<f64>, idx: usize, record: &PatientRecord<f64>) -> Result<Vec<PatientDraw<f64>>> {
    if samples.is_empty() {
        return Err(IoError::Format("sample store holds no draws".into()));
    }
    Ok(samples.patient_draws(idx, record))
}

/// Equal-tailed interval that collapses to the value itself for a single
/// draw, so one-draw what-if budgets still report.
fn interval(xs: &[f64], level: f64) -> Result<(f64, f64)> {
    match xs {
        [one] => Ok((*one, *one)),
        _ => Ok(credible_interval(xs, level)?),
    }
}

/// Pointwise band of `exp(log x(t))` over `times`.
pub fn trajectory_band(draws: &[PatientDraw<f64>], times: &[f64], level: f64) -> Result<Vec<BandPoint>> {
    times
        .iter()
        .map(|&t| {
            let mut xs: Vec<f64> = draws.iter().map(|d| log_psa_trajectory(&d.subject, t).exp()).collect();
            let (lo, hi) = interval(&xs, level)?;
            xs.sort_by(f64::total_cmp);
            Ok(BandPoint { t, lo, median: quantile_sorted(&xs, 0.5), hi })
        })
        .collect()
}

/// Optimal exam time, assurance curve, τ interval and trajectory band for
/// patient `idx` of `samples`.
pub fn decision_report(
    samples: &PosteriorSamples<f64>,
    idx: usize,
    record: &PatientRecord<f64>,
    cfg: &DecisionConfig<f64>,
) -> Result<OptimalTimeReport> {
    let draws = patient_draws(samples, idx, record)?;
    let res = optimal_time(&draws, record, cfg)?;
    let taus: Vec<f64> = draws.iter().map(|d| d.subject.tau).collect();
    let (tau_lo, tau_hi) = interval(&taus, BAND_LEVEL)?;
    let band_grid = DecisionConfig { horizon: res.earliest + cfg.horizon, ..*cfg }.grid(0.0);
    let curve = &res.curve;
    Ok(OptimalTimeReport {
        patient: record.id.clone(),
        pi_star: cfg.pi_star,
        rho: cfg.rho,
        grid_step: cfg.grid_step,
        horizon: cfg.horizon,
        draws: draws.len(),
        earliest: res.earliest,
        t_star: res.t_star,
        assurance_at_t_star: res.assurance_at_t_star,
        tau_interval: [tau_lo, tau_hi],
        curve: (0..curve.grid.len())
            .map(|k| CurvePoint { t: curve.grid[k], assurance: curve.assurance[k], count: curve.counts[k] })
            .collect(),
        band: trajectory_band(&draws, &band_grid, BAND_LEVEL)?,
    })
}

/// Looks up `patient` in both the store and the cohort and reports on it.
pub fn patient_report(
    store: &SampleStore,
    cohort: &CohortFile,
    patient: &str,
    cfg: &DecisionConfig<f64>,
) -> Result<OptimalTimeReport> {
    let (idx, record) = locate(store, cohort, patient)?;
    decision_report(&store.samples, idx, &record, cfg)
}

fn locate(store: &SampleStore, cohort: &CohortFile, patient: &str) -> Result<(usize, PatientRecord<f64>)> {
    let idx = store.patient_index(patient).ok_or_else(|| IoError::UnknownPatient(patient.to_string()))?;
    let entry = cohort.patient(patient).ok_or_else(|| IoError::UnknownPatient(patient.to_string()))?;
    Ok((idx, entry.record(&store.header.model)?))
}

/// Hypothetical future PSA values plus the decision settings and refit
/// budget to evaluate them with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    #[serde(flatten)]
    pub decision: DecisionRequest,
    #[serde(default)]
    pub psa: Vec<PsaPoint>,
    /// Stored draws to condition on (K).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    /// Per-draw sweeps of the patient's updates (L).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl WhatIfRequest {
    pub fn budget(&self) -> RefitBudget {
        let d = RefitBudget::default();
        RefitBudget {
            draws: self.draws.unwrap_or(d.draws),
            sweeps: self.sweeps.unwrap_or(d.sweeps),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub added: Vec<PsaPoint>,
    pub budget: RefitBudget,
    pub report: OptimalTimeReport,
}

/// Appends the hypothetical points to the patient's PSA series; they must
/// come after every recorded observation and be increasing in time.
pub fn augment(record: &PatientRecord<f64>, added: &[PsaPoint]) -> Result<PatientRecord<f64>> {
    let mut last = record.last_time().unwrap_or(0.0);
    let mut out = record.clone();
    for (k, p) in added.iter().enumerate() {
        if !p.t.is_finite() || p.t <= last {
            return Err(IoError::schema(format!("psa[{k}].t"), format!("must be later than {last}")));
        }
        if !p.y.is_finite() || p.y <= 0.0 {
            return Err(IoError::schema(format!("psa[{k}].y"), "PSA must be positive"));
        }
        out.psa_obs.push(PsaObs { t: p.t, y: p.y });
        last = p.t;
    }
    Ok(out)
}

/// Conditional re-inference for one patient under hypothetical data, with
/// the globals held at `K` stored draws.
pub fn whatif_report(store: &SampleStore, cohort: &CohortFile, patient: &str, req: &WhatIfRequest) -> Result<WhatIfReport> {
    let cfg = req.decision.config()?;
    let (idx, record) = locate(store, cohort, patient)?;
    let augmented = augment(&record, &req.psa)?;
    let budget = req.budget();
    let refit = refit_subject(&store.samples, Some(idx), &augmented, store.step_sizes(idx), &budget)?;
    Ok(WhatIfReport { added: req.psa.clone(), budget, report: decision_report(&refit, 0, &augmented, &cfg)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub patient: String,
    pub field: String,
    pub lo: f64,
    pub mean: f64,
    pub hi: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub level: f64,
    pub draws: usize,
    /// Per-family coverage, present when a truth was supplied.
    pub coverage: Option<Vec<IndividualCoverage>>,
    pub globals_covered: Option<usize>,
    pub globals: Vec<GlobalSummary<f64>>,
    pub subjects: Vec<SubjectSummary>,
}

pub fn summary_report(samples: &PosteriorSamples<f64>, truth: Option<&Truth<f64>>, level: f64) -> Result<SummaryReport> {
    let (coverage, globals) = match truth {
        Some(t) => {
            let rep = coverage_report(samples, t, level)?;
            (Some(rep.individual), rep.globals)
        }
        None => (None, summarize_globals(samples, None, level)?),
    };
    let mut subjects = Vec::new();
    for (i, id) in samples.patient_ids.iter().enumerate() {
        for (field, f) in subject_families::<f64>() {
            let series = samples.subject_series(i, f);
            let (lo, hi) = credible_interval(&series, level)?;
            subjects.push(SubjectSummary {
                patient: id.clone(),
                field: field.to_string(),
                lo,
                mean: series.iter().sum::<f64>() / series.len() as f64,
                hi,
                truth: truth.map(|t| f(&t.subjects[i])),
            });
        }
    }
    let globals_covered = truth.map(|_| globals.iter().filter(|g| g.covered == Some(true)).count());
    Ok(SummaryReport { level, draws: samples.len(), coverage, globals_covered, globals, subjects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicEntry {
    pub label: String,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub observations: usize,
}

/// WAIC of a store against the cohort it was fitted to.
pub fn waic_entry(label: &str, store: &SampleStore, cohort: &CohortFile) -> Result<WaicEntry> {
    let records = store
        .header
        .patient_ids
        .iter()
        .map(|id| {
            let entry = cohort.patient(id).ok_or_else(|| IoError::UnknownPatient(id.clone()))?;
            entry.record(&store.header.model)
        })
        .collect::<Result<Vec<_>>>()?;
    if records.len() != cohort.patients.len() {
        return Err(IoError::Format("cohort has patients the store was not fitted to".into()));
    }
    let w = waic(&store.samples, &records)?;
    Ok(WaicEntry { label: label.to_string(), waic: w.waic, lppd: w.lppd, p_waic: w.p_waic, observations: w.pointwise.len() })
}

/// Sorts by WAIC, best (lowest) first; ties keep input order.
pub fn rank_waic(mut entries: Vec<WaicEntry>) -> Vec<WaicEntry> {
    entries.sort_by(|a, b| a.waic.total_cmp(&b.waic));
    entries
}

/// Canonical JSON rendering of a report: pretty-printed, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
