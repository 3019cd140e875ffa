//! Posterior decision quantities: the assurance curve, the optimal exam
//! time, credible intervals, coverage tables and WAIC.

use serde::{Deserialize, Serialize};

use crate::density::{pet_obs_loglik, psa_obs_loglik};
use crate::error::{ModelError, Result};
use crate::params::SubjectParams;
use crate::patient::PatientRecord;
use crate::samples::{PatientDraw, PosteriorSamples};
use crate::scalar::{inv_logit, log_sum_exp, Real};
use crate::trajectory::{linear_predictor, log_psa_trajectory};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_GRID_STEP: f64 = 0.5;
pub const DEFAULT_HORIZON: f64 = 60.0;
/// Positivity thresholds shown side by side in reports.
pub const REPORT_PI_STARS: [f64; 3] = [0.5, 0.7, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig<T> {
    /// Target probability of a positive exam.
    pub pi_star: T,
    /// Required posterior assurance.
    pub rho: T,
    /// Grid spacing in months.
    pub grid_step: T,
    /// Search window after the last observation, in months.
    pub horizon: T,
}

impl<T: Real> DecisionConfig<T> {
    /// Config with the default assurance, grid step and horizon.
    pub fn new(pi_star: T) -> Self {
        Self {
            pi_star,
            rho: T::lit(DEFAULT_RHO),
            grid_step: T::lit(DEFAULT_GRID_STEP),
            horizon: T::lit(DEFAULT_HORIZON),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: T| x > T::zero() && x < T::one();
        if !open_unit(self.pi_star) {
            return Err(ModelError::InvalidConfig(format!("pi_star must lie in (0,1), got {:?}", self.pi_star)));
        }
        if !open_unit(self.rho) {
            return Err(ModelError::InvalidConfig(format!("rho must lie in (0,1), got {:?}", self.rho)));
        }
        if !(self.grid_step > T::zero()) || !self.grid_step.is_finite() {
            return Err(ModelError::InvalidConfig("grid_step must be positive".into()));
        }
        if !(self.horizon >= T::zero()) || !self.horizon.is_finite() {
            return Err(ModelError::InvalidConfig("horizon must be non-negative".into()));
        }
        Ok(())
    }

    /// Grid `start, start + step, …` up to `start + horizon`.
    pub fn grid(&self, start: T) -> Vec<T> {
        let n = (self.horizon / self.grid_step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n).map(|k| start + T::from_usize(k).unwrap() * self.grid_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceCurve<T> {
    pub grid: Vec<T>,
    pub assurance: Vec<T>,
    /// Draws satisfying both conditions at each grid point.
    pub counts: Vec<usize>,
    pub pi_star: T,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalTimeResult<T> {
    pub t_star: Option<T>,
    pub assurance_at_t_star: Option<T>,
    /// Lower bound of the search: the patient's last observation time.
    pub earliest: T,
    pub rho: T,
    pub curve: AssuranceCurve<T>,
}

/// Positivity probability implied by one draw at time `t`.
pub fn draw_positivity<T: Real>(d: &PatientDraw<T>, t: T) -> T {
    let log_x = log_psa_trajectory(&d.subject, t);
    inv_logit(linear_predictor(d.beta0, d.beta1, d.beta2, log_x, t))
}

/// Samples `(π^b(t), τ^b)` from the joint predictive of positivity and the
/// change point.
pub fn pi_tau_samples<T: Real>(draws: &[PatientDraw<T>], t: T) -> Vec<(T, T)> {
    draws.iter().map(|d| (draw_positivity(d, t), d.subject.tau)).collect()
}

/// Number of draws with `π^b(t) > π*` and `τ^b < t`.
pub fn assurance_count<T: Real>(draws: &[PatientDraw<T>], t: T, pi_star: T) -> usize {
    draws
        .iter()
        .filter(|d| d.subject.tau < t && draw_positivity(d, t) > pi_star)
        .count()
}

/// Monte-Carlo posterior probability that positivity exceeds `pi_star` and
/// the change point has already occurred at `t`. Zero for an empty draw set.
pub fn assurance<T: Real>(draws: &[PatientDraw<T>], t: T, pi_star: T) -> T {
    if draws.is_empty() {
        return T::zero();
    }
    T::from_usize(assurance_count(draws, t, pi_star)).unwrap() / T::from_usize(draws.len()).unwrap()
}

pub fn assurance_curve<T: Real>(draws: &[PatientDraw<T>], grid: &[T], pi_star: T) -> AssuranceCurve<T> {
    let counts: Vec<usize> = grid.iter().map(|&t| assurance_count(draws, t, pi_star)).collect();
    let b = T::from_usize(draws.len().max(1)).unwrap();
    AssuranceCurve {
        grid: grid.to_vec(),
        assurance: counts.iter().map(|&c| T::from_usize(c).unwrap() / b).collect(),
        counts,
        pi_star,
        draws: draws.len(),
    }
}

/// First grid time at or after `earliest` whose assurance reaches `rho`.
pub fn optimal_time_from<T: Real>(
    draws: &[PatientDraw<T>],
    earliest: T,
    cfg: &DecisionConfig<T>,
) -> Result<OptimalTimeResult<T>> {
    cfg.validate()?;
    let curve = assurance_curve(draws, &cfg.grid(earliest), cfg.pi_star);
    let hit = curve.assurance.iter().position(|&a| a >= cfg.rho);
    Ok(OptimalTimeResult {
        t_star: hit.map(|k| curve.grid[k]),
        assurance_at_t_star: hit.map(|k| curve.assurance[k]),
        earliest,
        rho: cfg.rho,
        curve,
    })
}

/// Optimal exam time for `patient`, searched from its last observation.
pub fn optimal_time<T: Real>(
    draws: &[PatientDraw<T>],
    patient: &PatientRecord<T>,
    cfg: &DecisionConfig<T>,
) -> Result<OptimalTimeResult<T>> {
    let earliest = patient
        .last_time()
        .ok_or_else(|| ModelError::EmptyHistory(patient.id.clone()))?;
    optimal_time_from(draws, earliest, cfg)
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let h = T::from_usize(n - 1).unwrap() * p;
    let lo = h.floor().to_usize().unwrap().min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - T::from_usize(lo).unwrap();
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-tailed credible interval at `level`; `level = 1` gives `(min, max)`.
pub fn credible_interval<T: Real>(draws: &[T], level: T) -> Result<(T, T)> {
    if draws.len() < 2 {
        return Err(ModelError::TooFewDraws { need: 2, got: draws.len() });
    }
    if !(level > T::zero() && level <= T::one()) {
        return Err(ModelError::InvalidConfig(format!("level must lie in (0,1], got {level:?}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in draws"));
    let tail = (T::one() - level) / T::lit(2.0);
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, T::one() - tail)))
}

fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize(xs.len()).unwrap()
}

/// Ground-truth parameters of a simulated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth<T> {
    pub subjects: Vec<SubjectParams<T>>,
    pub globals: crate::params::GlobalParams<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualCoverage {
    pub name: String,
    pub covered: usize,
    pub total: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary<T> {
    pub name: String,
    pub lo: T,
    pub mean: T,
    pub hi: T,
    pub truth: Option<T>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport<T> {
    pub level: T,
    pub individual: Vec<IndividualCoverage>,
    pub globals: Vec<GlobalSummary<T>>,
}

impl<T> CoverageReport<T> {
    pub fn globals_covered(&self) -> usize {
        self.globals.iter().filter(|g| g.covered == Some(true)).count()
    }

    pub fn individual(&self, name: &str) -> Option<&IndividualCoverage> {
        self.individual.iter().find(|c| c.name == name)
    }
}

type Extract<T> = fn(&SubjectParams<T>) -> T;

/// Individual parameter families in reporting order.
pub fn subject_families<T: Real>() -> [(&'static str, Extract<T>); 6] {
    [
        ("lambda", |s| s.lambda),
        ("tau", |s| s.tau),
        ("mu", |s| s.mu),
        ("gamma", |s| s.gamma),
        ("a", |s| s.a),
        ("sigma2", |s| s.sigma2),
    ]
}

/// Interval, mean and (optionally) truth for each global parameter.
pub fn summarize_globals<T: Real>(
    samples: &PosteriorSamples<T>,
    truth: Option<&crate::params::GlobalParams<T>>,
    level: T,
) -> Result<Vec<GlobalSummary<T>>> {
    if samples.draws.len() < 2 {
        return Err(ModelError::TooFewDraws { need: 2, got: samples.draws.len() });
    }
    let per_draw: Vec<Vec<(String, T)>> = samples.draws.iter().map(|d| d.globals.named_values()).collect();
    let names: Vec<String> = per_draw[0].iter().map(|(n, _)| n.clone()).collect();
    let truth_vals = truth.map(|g| g.named_values());
    if let Some(tv) = &truth_vals {
        let tn: Vec<&String> = tv.iter().map(|(n, _)| n).collect();
        if tn != names.iter().collect::<Vec<_>>() {
            return Err(ModelError::Dimension(format!(
                "truth has {} global parameters, samples have {}",
                tv.len(),
                names.len()
            )));
        }
    }
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let series: Vec<T> = per_draw.iter().map(|v| v[k].1).collect();
            let (lo, hi) = credible_interval(&series, level)?;
            let tval = truth_vals.as_ref().map(|tv| tv[k].1);
            Ok(GlobalSummary {
                name: name.clone(),
                lo,
                mean: mean(&series),
                hi,
                truth: tval,
                covered: tval.map(|v| v >= lo && v <= hi),
            })
        })
        .collect()
}

/// Per-family share of patients whose true value lies inside the credible
/// interval, plus the global-parameter table.
pub fn coverage_report<T: Real>(samples: &PosteriorSamples<T>, truth: &Truth<T>, level: T) -> Result<CoverageReport<T>> {
    let n = samples.patient_ids.len();
    if truth.subjects.len() != n {
        return Err(ModelError::Dimension(format!(
            "truth has {} patients, samples have {n}",
            truth.subjects.len()
        )));
    }
    let mut individual = Vec::new();
    for (name, f) in subject_families::<T>() {
        let mut covered = 0;
        for (i, t) in truth.subjects.iter().enumerate() {
            let (lo, hi) = credible_interval(&samples.subject_series(i, f), level)?;
            let v = f(t);
            if v >= lo && v <= hi {
                covered += 1;
            }
        }
        individual.push(IndividualCoverage {
            name: name.to_string(),
            covered,
            total: n,
            percent: if n == 0 { 0.0 } else { 100.0 * covered as f64 / n as f64 },
        });
    }
    Ok(CoverageReport {
        level,
        individual,
        globals: summarize_globals(samples, Some(&truth.globals), level)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsKind {
    Psa,
    Pet,
}

impl ObsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObsKind::Psa => "psa",
            ObsKind::Pet => "pet",
        }
    }
}

/// Log-likelihood of one observation under each draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseRow<T> {
    pub patient: String,
    pub kind: ObsKind,
    pub index: usize,
    pub loglik: Vec<T>,
}

/// `ℓ_{k,b}` for every PSA and PET observation `k` and draw `b`.
pub fn pointwise_loglik<T: Real>(samples: &PosteriorSamples<T>, cohort: &[PatientRecord<T>]) -> Result<Vec<PointwiseRow<T>>> {
    let ids: Vec<&str> = cohort.iter().map(|p| p.id.as_str()).collect();
    if ids != samples.patient_ids.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(ModelError::Dimension("cohort patients do not match the sample store".into()));
    }
    let mut rows = Vec::new();
    for (i, p) in cohort.iter().enumerate() {
        let draws = samples.patient_draws(i, p);
        for (j, o) in p.psa_obs.iter().enumerate() {
            rows.push(PointwiseRow {
                patient: p.id.clone(),
                kind: ObsKind::Psa,
                index: j,
                loglik: draws.iter().map(|d| psa_obs_loglik(&d.subject, o.t, o.y)).collect(),
            });
        }
        for (j, o) in p.pet_obs.iter().enumerate() {
            rows.push(PointwiseRow {
                patient: p.id.clone(),
                kind: ObsKind::Pet,
                index: j,
                loglik: draws
                    .iter()
                    .map(|d| pet_obs_loglik(&d.subject, d.beta0, d.beta1, d.beta2, o.t, o.z))
                    .collect(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseWaic<T> {
    pub patient: String,
    pub kind: ObsKind,
    pub index: usize,
    pub lppd: T,
    pub p_waic: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicResult<T> {
    pub waic: T,
    pub lppd: T,
    pub p_waic: T,
    pub pointwise: Vec<PointwiseWaic<T>>,
}

/// WAIC from a pointwise log-likelihood table (lower is better).
pub fn waic_from_pointwise<T: Real>(rows: &[PointwiseRow<T>]) -> Result<WaicResult<T>> {
    let mut pointwise = Vec::with_capacity(rows.len());
    for row in rows {
        let b = row.loglik.len();
        if b < 2 {
            return Err(ModelError::TooFewDraws { need: 2, got: b });
        }
        if row.loglik.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite {
                patient: row.patient.clone(),
                kind: row.kind.as_str(),
                index: row.index,
            });
        }
        let bt = T::from_usize(b).unwrap();
        let lppd = log_sum_exp(&row.loglik) - bt.ln();
        let m = mean(&row.loglik);
        let ss = row.loglik.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m));
        pointwise.push(PointwiseWaic {
            patient: row.patient.clone(),
            kind: row.kind,
            index: row.index,
            lppd,
            p_waic: ss / (bt - T::one()),
        });
    }
    let lppd = pointwise.iter().fold(T::zero(), |a, p| a + p.lppd);
    let p_waic = pointwise.iter().fold(T::zero(), |a, p| a + p.p_waic);
    Ok(WaicResult {
        waic: -T::lit(2.0) * (lppd - p_waic),
        lppd,
        p_waic,
        pointwise,
    })
}

pub fn waic<T: Real>(samples: &PosteriorSamples<T>, cohort: &[PatientRecord<T>]) -> Result<WaicResult<T>> {
    waic_from_pointwise(&pointwise_loglik(samples, cohort)?)
}
