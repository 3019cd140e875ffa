//! Synthetic cohorts in the layout of the simulation study: PSA at a few
//! integer months in 1..=25, PET-PSMA exams later in 26..=38, nine binary
//! covariates and age, subject parameters drawn from the hierarchical model.

use std::collections::BTreeMap;

use psma_core::{
    positivity_prob, log_psa_trajectory, GlobalParams, PatientRecord, PetObs, PsaObs, SubjectParams, Truth,
};
use psma_io::{CohortFile, ModelConfig, PatientEntry, TruthSection};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_BINARY: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

/// How the individual intercepts `λ_i` are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaLaw {
    pub mean: f64,
    pub sd: f64,
}

impl Default for LambdaLaw {
    fn default() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub m: usize,
    /// Inclusive bounds on the number of PSA measurements.
    pub psa_count_range: (usize, usize),
    /// Inclusive integer months PSA times are drawn from.
    pub psa_time_pool: (u32, u32),
    pub pet_count_range: (usize, usize),
    pub pet_time_pool: (u32, u32),
    /// Generating globals, laid out for [`ModelConfig::default`].
    pub truth: GlobalParams<f64>,
    pub age_mean: f64,
    pub age_sd: f64,
    pub binary_p: f64,
    pub lambda_law: LambdaLaw,
    /// Extra standard-normal covariates `noise1..` that play no role in
    /// generation.
    pub noise_covariates: usize,
    pub seed: u64,
}

/// The globals used in the simulation study.
pub fn study_truth() -> GlobalParams<f64> {
    GlobalParams {
        alpha_mu: vec![1.0, 0.1, 0.3, 0.5, 0.2, 0.1],
        alpha_gamma: vec![-1.0, -0.01, -0.01, -0.01, -0.01, -0.01],
        alpha_beta: vec![1.0, 1.0, 1.0, 0.5, -0.5, -0.5],
        beta1: 4.0,
        beta2: 0.5,
        psi_a: 5.7,
        omega_mu2: 0.1,
        omega_gamma2: 0.1,
        omega_a2: 1.0,
        ig_a: 3.0,
        ig_b: 0.5,
        lambda: None,
    }
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            m: 80,
            psa_count_range: (5, 8),
            psa_time_pool: (1, 25),
            pet_count_range: (3, 5),
            pet_time_pool: (26, 38),
            truth: study_truth(),
            age_mean: 75.0,
            age_sd: 7.0,
            binary_p: 0.5,
            lambda_law: LambdaLaw::default(),
            noise_covariates: 0,
            seed: 0,
        }
    }
}

impl SimDesign {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidDesign(m.into()));
        let (plo, phi) = self.psa_count_range;
        let (qlo, qhi) = self.pet_count_range;
        let psa_pool = (self.psa_time_pool.1 + 1).saturating_sub(self.psa_time_pool.0) as usize;
        let pet_pool = (self.pet_time_pool.1 + 1).saturating_sub(self.pet_time_pool.0) as usize;
        if self.psa_time_pool.0 == 0 {
            return bad("PSA times must be positive");
        }
        if plo < 5 || plo > phi || phi > psa_pool {
            return bad("PSA counts must satisfy 5 <= lo <= hi <= pool size");
        }
        if qlo > qhi || qhi > pet_pool {
            return bad("PET counts must satisfy lo <= hi <= pool size");
        }
        if self.psa_time_pool.1 >= self.pet_time_pool.0 {
            return bad("every PSA time must precede every PET time");
        }
        let t = &self.truth;
        if t.alpha_mu.len() != 6 || t.alpha_gamma.len() != 6 || t.alpha_beta.len() != 6 {
            return bad("truth vectors must have length 6");
        }
        if t.validate().is_err() || t.lambda.is_some() {
            return bad("truth globals must have positive variances and individual lambda");
        }
        if !(self.age_sd > 0.0) || !(0.0..=1.0).contains(&self.binary_p) || !(self.lambda_law.sd >= 0.0) {
            return bad("age_sd, binary_p or lambda_law out of range");
        }
        Ok(())
    }
}

/// Design rows from the binary covariates and standardised age:
/// growth rows `(1, c1..c5)`, logistic row `(1, c6..c9, age_std)`.
pub fn covariate_assignment(binary: &[f64; N_BINARY], age_std: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut growth = vec![1.0];
    growth.extend_from_slice(&binary[..5]);
    let mut logistic = vec![1.0];
    logistic.extend_from_slice(&binary[5..]);
    logistic.push(age_std);
    (growth.clone(), growth, logistic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub subjects: Vec<SubjectParams<f64>>,
    pub globals: GlobalParams<f64>,
    pub covariates: Vec<BTreeMap<String, f64>>,
}

impl SimTruth {
    pub fn as_truth(&self) -> Truth<f64> {
        Truth { subjects: self.subjects.clone(), globals: self.globals.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimCohort {
    pub records: Vec<PatientRecord<f64>>,
    pub truth: SimTruth,
}

impl SimCohort {
    /// The cohort as a file document, with a truth section.
    pub fn to_file(&self) -> CohortFile {
        let patients = self
            .records
            .iter()
            .zip(&self.truth.covariates)
            .map(|(r, c)| PatientEntry::from_record(r, c.clone()))
            .collect();
        let subjects = self.records.iter().map(|r| r.id.clone()).zip(self.truth.subjects.iter().copied()).collect();
        CohortFile {
            truth: Some(TruthSection { model: ModelConfig::default(), globals: self.truth.globals.clone(), subjects }),
            ..CohortFile::new(patients)
        }
    }
}

fn patient_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

fn draw_times<R: Rng>(rng: &mut R, count: (usize, usize), pool: (u32, u32)) -> Vec<f64> {
    let n = rng.random_range(count.0..=count.1);
    let size = (pool.1 - pool.0 + 1) as usize;
    let mut ts: Vec<f64> = sample(rng, size, n).into_iter().map(|k| (pool.0 as usize + k) as f64).collect();
    ts.sort_by(|a, b| a.total_cmp(b));
    ts
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse-gamma draw with shape `a` and scale `b`.
fn inv_gamma<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    let g: f64 = Gamma::new(a, 1.0 / b).expect("positive shape and scale").sample(rng);
    1.0 / g
}

/// Draws one subject's parameters given its design rows and PSA times.
pub fn draw_subject<R: Rng>(
    rng: &mut R,
    g: &GlobalParams<f64>,
    law: LambdaLaw,
    cov_mu: &[f64],
    cov_gamma: &[f64],
    psa_times: &[f64],
) -> SubjectParams<f64> {
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let n = psa_times.len();
    // third and (n-2)-th ordered times, 1-based
    let (lo, hi) = (psa_times[2], psa_times[n - 3]);
    SubjectParams {
        lambda: law.mean + law.sd * n01.sample(rng),
        mu: (dot(cov_mu, &g.alpha_mu) + g.omega_mu2.sqrt() * n01.sample(rng)).exp(),
        gamma: (dot(cov_gamma, &g.alpha_gamma) + g.omega_gamma2.sqrt() * n01.sample(rng)).exp(),
        a: g.psi_a + g.omega_a2.sqrt() * n01.sample(rng),
        tau: if hi > lo { rng.random_range(lo..hi) } else { lo },
        sigma2: inv_gamma(rng, g.ig_a, g.ig_b),
    }
}

pub fn simulate_cohort(design: &SimDesign) -> Result<SimCohort, SimError> {
    design.validate()?;
    let g = &design.truth;
    let width = design.m.max(1).to_string().len().max(3);
    let mut records = Vec::with_capacity(design.m);
    let mut subjects = Vec::with_capacity(design.m);
    let mut covariates = Vec::with_capacity(design.m);
    for i in 0..design.m {
        let mut rng = patient_rng(design.seed, i);
        let mut binary = [0.0; N_BINARY];
        for b in binary.iter_mut() {
            *b = f64::from(rng.random_bool(design.binary_p));
        }
        let age = Normal::new(design.age_mean, design.age_sd).unwrap().sample(&mut rng).floor();
        let age_std = (age - design.age_mean) / design.age_sd;
        let noise: Vec<f64> =
            (0..design.noise_covariates).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let (cov_mu, cov_gamma, cov_beta) = covariate_assignment(&binary, age_std);

        let psa_t = draw_times(&mut rng, design.psa_count_range, design.psa_time_pool);
        let pet_t = draw_times(&mut rng, design.pet_count_range, design.pet_time_pool);
        let sp = draw_subject(&mut rng, g, design.lambda_law, &cov_mu, &cov_gamma, &psa_t);

        let sd = sp.sigma2.sqrt();
        let psa_obs = psa_t
            .iter()
            .map(|&t| {
                let e: f64 = Normal::new(0.0, sd).unwrap().sample(&mut rng);
                PsaObs { t, y: (log_psa_trajectory(&sp, t) + e).exp() }
            })
            .collect();
        let pet_obs = pet_t
            .iter()
            .map(|&t| {
                let p = positivity_prob(g, &cov_beta, log_psa_trajectory(&sp, t), t);
                PetObs { t, z: rng.random::<f64>() < p }
            })
            .collect();

        let mut named: BTreeMap<String, f64> =
            binary.iter().enumerate().map(|(k, &v)| (format!("c{}", k + 1), v)).collect();
        named.insert("age".into(), age);
        named.insert("age_std".into(), age_std);
        for (k, v) in noise.iter().enumerate() {
            named.insert(format!("noise{}", k + 1), *v);
        }

        records.push(PatientRecord {
            id: format!("p{:0width$}", i + 1),
            cov_mu,
            cov_gamma,
            cov_beta,
            psa_obs,
            pet_obs,
        });
        subjects.push(sp);
        covariates.push(named);
    }
    Ok(SimCohort { records, truth: SimTruth { subjects, globals: g.clone(), covariates } })
}
