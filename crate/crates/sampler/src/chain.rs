//! Chain driver: configuration, initialisation, full sweeps, thinning,
//! progress reporting and checkpoints.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use psma_core::density::{hyper_logprior, PRIOR_VARIANCE};
use psma_core::{
    joint_loglik, random_effects_logpdf, ChainMeta, Draw, PatientRecord, PosteriorSamples, SubjectParams, TauSupport,
};

use crate::adapt::{AcceptCounter, AdaptSettings, Phase, ScalarAdapter};
use crate::error::SamplerError;
use crate::hypers::{
    initial_hyper_adapters, scale_step, update_hypers, HyperState, LambdaHyperState, ModelSpec, ScaleFamily,
};
use crate::logistic::{update_logistic_block, LogisticData};
use crate::subject::{subject_log_target, update_subject_params, update_tau, SubjectAdapters, SubjectCoord, SweepCtx};

const INIT_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub adapt_target: f64,
    pub adapt_decay: f64,
    /// Update patients on the rayon pool. Results do not depend on it.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 150_000,
            burn_in: 100_000,
            thinning: 10,
            seed: 0,
            adapt_target: 0.44,
            adapt_decay: 0.7,
            parallel: true,
        }
    }
}

impl ChainConfig {
    pub fn new(iterations: u64, burn_in: u64, thinning: u64, seed: u64) -> Self {
        Self { iterations, burn_in, thinning, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        if self.burn_in >= self.iterations {
            return bad(format!("burn-in {} must be below iterations {}", self.burn_in, self.iterations));
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1".into());
        }
        if (self.iterations - self.burn_in) % self.thinning != 0 {
            return bad(format!(
                "iterations - burn-in ({}) must be divisible by thinning {}",
                self.iterations - self.burn_in,
                self.thinning
            ));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return bad("adapt_target must lie in (0,1)".into());
        }
        if !(self.adapt_decay > 0.5 && self.adapt_decay <= 1.0) {
            return bad("adapt_decay must lie in (0.5,1]".into());
        }
        Ok(())
    }

    pub fn meta(&self) -> ChainMeta {
        ChainMeta { seed: self.seed, iterations: self.iterations, burn_in: self.burn_in, thinning: self.thinning }
    }

    fn adapt(&self) -> AdaptSettings {
        AdaptSettings { target: self.adapt_target, decay: self.adapt_decay }
    }

    fn phase(&self, iteration: u64) -> Phase {
        if iteration >= self.burn_in {
            Phase::Sampling
        } else if iteration >= self.burn_in - self.burn_in / 5 {
            Phase::LateBurnIn
        } else {
            Phase::EarlyBurnIn
        }
    }
}

/// Random stream owned by patient `i`; stream 0 drives the global blocks.
pub fn patient_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

pub fn global_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatientState {
    sp: SubjectParams<f64>,
    rng: ChaCha8Rng,
    adapters: SubjectAdapters,
}

fn least_squares(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mt, slope)
}

/// Data-informed starting point inside the support: change point at the
/// ramp midpoint, a line through the earlier log-PSA values, the asymptote
/// at the last log-PSA value and the noise at the two-piece residual
/// variance.
pub fn initial_subject(p: &PatientRecord<f64>, support: &TauSupport<f64>) -> SubjectParams<f64> {
    let tau = support.ramp_mid();
    let (pre_t, pre_y): (Vec<f64>, Vec<f64>) =
        p.psa_obs.iter().filter(|o| o.t <= tau).map(|o| (o.t, o.y.ln())).unzip();
    let (_, slope) = least_squares(&pre_t, &pre_y);
    let mu = (-slope).clamp(1e-3, 50.0);
    let n = pre_t.len() as f64;
    let lambda = pre_y.iter().sum::<f64>() / n + mu * pre_t.iter().sum::<f64>() / n;
    let a = p.psa_obs.last().map(|o| o.y.ln()).unwrap_or(0.0);
    let mut sp = SubjectParams { lambda, mu, gamma: 0.5, a, tau, sigma2: 1.0 };
    let rss: f64 = p
        .psa_obs
        .iter()
        .map(|o| {
            let r = o.y.ln() - psma_core::log_psa_trajectory(&sp, o.t);
            r * r
        })
        .sum();
    sp.sigma2 = (rss / p.psa_obs.len() as f64).clamp(0.01, 100.0);
    sp
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// Ridge-stabilised least squares of `ys` on the design rows; returns the
/// coefficients and the residual variance.
fn regress(rows: &[&[f64]], ys: &[f64]) -> (Vec<f64>, f64) {
    let p = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(ys);
    let lhs = x.transpose() * &x + DMatrix::identity(p, p) / PRIOR_VARIANCE;
    let coef = lhs.cholesky().map(|c| c.solve(&(x.transpose() * &y))).unwrap_or_else(|| DVector::zeros(p));
    let resid = &y - &x * &coef;
    (coef.iter().copied().collect(), resid.norm_squared() / ys.len() as f64)
}

/// Hyperparameters matched to the starting subject values, so the chain
/// does not begin with the population model far from its members.
pub fn initial_hypers(spec: &ModelSpec, patients: &[PatientRecord<f64>], subjects: &[SubjectParams<f64>]) -> HyperState {
    let mut h = HyperState::at_prior_mean(spec);
    if patients.len() < 2 {
        return h;
    }
    let floor = 1e-2;
    let log_mu: Vec<f64> = subjects.iter().map(|s| s.mu.ln()).collect();
    let log_gamma: Vec<f64> = subjects.iter().map(|s| s.gamma.ln()).collect();
    let (alpha_mu, v_mu) = regress(&patients.iter().map(|p| p.cov_mu.as_slice()).collect::<Vec<_>>(), &log_mu);
    let (alpha_gamma, v_gamma) =
        regress(&patients.iter().map(|p| p.cov_gamma.as_slice()).collect::<Vec<_>>(), &log_gamma);
    h.alpha_mu = alpha_mu;
    h.alpha_gamma = alpha_gamma;
    h.log_omega_mu = 0.5 * v_mu.max(floor).ln();
    h.log_omega_gamma = 0.5 * v_gamma.max(floor).ln();
    let (m_a, v_a) = moments(&subjects.iter().map(|s| s.a).collect::<Vec<_>>());
    h.psi_a = m_a;
    h.log_omega_a = 0.5 * v_a.max(floor).ln();
    let (m_s, v_s) = moments(&subjects.iter().map(|s| s.sigma2).collect::<Vec<_>>());
    h.log_sigma_mean = m_s.ln();
    h.log_sigma_var = v_s.max(floor * m_s * m_s).ln();
    if let Some(l) = h.lambda.as_mut() {
        let (m_l, v_l) = moments(&subjects.iter().map(|s| s.lambda).collect::<Vec<_>>());
        *l = LambdaHyperState { psi: m_l, log_omega: 0.5 * v_l.max(floor).ln() };
    }
    h
}

/// Pooled acceptance rates for one update family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub name: String,
    /// Over the last 20% of burn-in.
    pub late_burn_in: Option<f64>,
    pub sampling: Option<f64>,
    /// Whether the step size of this family is adapted.
    pub adaptive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: u64,
    pub total: u64,
    pub log_posterior: f64,
    pub acceptance: Vec<AcceptanceRate>,
}

/// Everything needed to resume a chain bit-for-bit, apart from the cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub config: ChainConfig,
    pub spec: ModelSpec,
    pub iteration: u64,
    pub patient_ids: Vec<String>,
    patients: Vec<PatientState>,
    pub hyper: HyperState,
    hyper_adapters: Vec<ScalarAdapter>,
    scale_adapters: Vec<ScalarAdapter>,
    global_rng: ChaCha8Rng,
    pub draws: Vec<Draw<f64>>,
}

/// Metropolis-within-Gibbs sampler over all subject and global parameters.
#[derive(Debug, Clone)]
pub struct Sampler {
    cfg: ChainConfig,
    spec: ModelSpec,
    patients: Vec<PatientRecord<f64>>,
    supports: Vec<TauSupport<f64>>,
    states: Vec<PatientState>,
    hyper: HyperState,
    hyper_adapters: Vec<ScalarAdapter>,
    scale_adapters: Vec<ScalarAdapter>,
    global_rng: ChaCha8Rng,
    iteration: u64,
    draws: Vec<Draw<f64>>,
}

fn check_cohort(cohort: &[PatientRecord<f64>], spec: &ModelSpec) -> Result<Vec<TauSupport<f64>>, SamplerError> {
    cohort
        .iter()
        .map(|p| {
            p.validate()?;
            let dims = (p.cov_mu.len(), p.cov_gamma.len(), p.cov_beta.len());
            if dims != (spec.p_mu, spec.p_gamma, spec.p_beta) {
                return Err(SamplerError::Model(psma_core::ModelError::Dimension(format!(
                    "patient {} has design rows {dims:?}, model expects ({}, {}, {})",
                    p.id, spec.p_mu, spec.p_gamma, spec.p_beta
                ))));
            }
            Ok(TauSupport::from_patient(p)?)
        })
        .collect()
}

impl Sampler {
    pub fn new(cfg: ChainConfig, cohort: &[PatientRecord<f64>], spec: ModelSpec) -> Result<Self, SamplerError> {
        cfg.validate()?;
        let supports = check_cohort(cohort, &spec)?;
        let starts: Vec<SubjectParams<f64>> = cohort.iter().zip(&supports).map(|(p, s)| initial_subject(p, s)).collect();
        let hyper = initial_hypers(&spec, cohort, &starts);
        let g = hyper.to_globals();
        let mut states = Vec::with_capacity(cohort.len());
        for (i, p) in cohort.iter().enumerate() {
            let mut rng = patient_rng(cfg.seed, i);
            let mut sp = starts[i];
            let mut tries = 0;
            while !subject_log_target(p, &sp, &g).is_finite() {
                tries += 1;
                if tries > INIT_RETRIES {
                    return Err(SamplerError::Initialization(p.id.clone()));
                }
                let base = starts[i];
                sp = SubjectParams {
                    lambda: base.lambda + rng.random_range(-1.0..1.0),
                    mu: base.mu * rng.random_range(0.5..2.0),
                    gamma: base.gamma * rng.random_range(0.5..2.0),
                    a: base.a + rng.random_range(-1.0..1.0),
                    sigma2: base.sigma2 * rng.random_range(0.5..4.0),
                    ..base
                };
            }
            states.push(PatientState { sp, rng, adapters: SubjectAdapters::default() });
        }
        Ok(Self {
            cfg,
            spec,
            patients: cohort.to_vec(),
            supports,
            hyper_adapters: initial_hyper_adapters(&hyper),
            scale_adapters: ScaleFamily::for_state(&hyper).iter().map(|_| ScalarAdapter::new(0.1)).collect(),
            hyper,
            states,
            global_rng: global_rng(cfg.seed),
            iteration: 0,
            draws: Vec::new(),
        })
    }

    pub fn resume(ckpt: ChainCheckpoint, cohort: &[PatientRecord<f64>]) -> Result<Self, SamplerError> {
        ckpt.config.validate()?;
        let supports = check_cohort(cohort, &ckpt.spec)?;
        let ids: Vec<&String> = cohort.iter().map(|p| &p.id).collect();
        if ids != ckpt.patient_ids.iter().collect::<Vec<_>>() || ckpt.patients.len() != cohort.len() {
            return Err(SamplerError::InvalidConfig("checkpoint does not match the cohort".into()));
        }
        Ok(Self {
            cfg: ckpt.config,
            spec: ckpt.spec,
            patients: cohort.to_vec(),
            supports,
            states: ckpt.patients,
            hyper: ckpt.hyper,
            hyper_adapters: ckpt.hyper_adapters,
            scale_adapters: ckpt.scale_adapters,
            global_rng: ckpt.global_rng,
            iteration: ckpt.iteration,
            draws: ckpt.draws,
        })
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            config: self.cfg,
            spec: self.spec,
            iteration: self.iteration,
            patient_ids: self.patients.iter().map(|p| p.id.clone()).collect(),
            patients: self.states.clone(),
            hyper: self.hyper.clone(),
            hyper_adapters: self.hyper_adapters.clone(),
            scale_adapters: self.scale_adapters.clone(),
            global_rng: self.global_rng.clone(),
            draws: self.draws.clone(),
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn subjects(&self) -> Vec<SubjectParams<f64>> {
        self.states.iter().map(|s| s.sp).collect()
    }

    pub fn hyper(&self) -> &HyperState {
        &self.hyper
    }

    pub fn draws(&self) -> &[Draw<f64>] {
        &self.draws
    }

    /// Per-patient step sizes `(λ, log μ, log γ, a, log σ², τ ramp)`.
    pub fn subject_steps(&self) -> Vec<[f64; 6]> {
        self.states.iter().map(|s| s.adapters.steps()).collect()
    }

    /// One full sweep: patients, logistic block, hyperparameters.
    pub fn step(&mut self) -> Result<(), SamplerError> {
        let g = self.hyper.to_globals();
        let ctx = SweepCtx { iteration: self.iteration, phase: self.cfg.phase(self.iteration), adapt: self.cfg.adapt() };
        let work = |(state, (p, support)): (&mut PatientState, (&PatientRecord<f64>, &TauSupport<f64>))| {
            let mut sp = update_subject_params(&mut state.rng, p, &state.sp, &g, &mut state.adapters, &ctx);
            sp.tau = update_tau(&mut state.rng, p, &sp, &g, support, &mut state.adapters, &ctx);
            state.sp = sp;
        };
        if self.cfg.parallel {
            self.states.par_iter_mut().zip(self.patients.par_iter().zip(&self.supports)).for_each(work);
        } else {
            self.states.iter_mut().zip(self.patients.iter().zip(&self.supports)).for_each(work);
        }

        let subjects = self.subjects();
        let data = LogisticData::from_cohort(&self.patients, &subjects);
        let coefs = update_logistic_block(&mut self.global_rng, &data, &self.hyper.logistic_coefs(), PRIOR_VARIANCE)?;
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(SamplerError::Numerical(format!("non-finite logistic coefficients at iteration {}", self.iteration)));
        }
        self.hyper.set_logistic_coefs(&coefs);
        self.hyper =
            update_hypers(&mut self.global_rng, &self.hyper, &self.patients, &subjects, &mut self.hyper_adapters, &ctx);

        let mut subjects = subjects;
        if !self.patients.is_empty() {
            let g = self.hyper.to_globals();
            let ll = |(p, sp): (&PatientRecord<f64>, &SubjectParams<f64>)| joint_loglik(p, sp, &g);
            let mut current_ll: Vec<f64> = if self.cfg.parallel {
                self.patients.par_iter().zip(subjects.par_iter()).map(ll).collect()
            } else {
                self.patients.iter().zip(&subjects).map(ll).collect()
            };
            for (family, adapter) in ScaleFamily::for_state(&self.hyper).into_iter().zip(&mut self.scale_adapters) {
                scale_step(
                    &mut self.global_rng,
                    &mut self.hyper,
                    family,
                    &self.patients,
                    &mut subjects,
                    &mut current_ll,
                    adapter,
                    &ctx,
                );
            }
            for (state, sp) in self.states.iter_mut().zip(&subjects) {
                state.sp = *sp;
            }
        }

        self.iteration += 1;
        if self.iteration > self.cfg.burn_in && (self.iteration - self.cfg.burn_in) % self.cfg.thinning == 0 {
            self.draws.push(Draw { subjects, globals: self.hyper.to_globals() });
        }
        Ok(())
    }

    /// Runs to completion, calling `on_progress` every `report_every`
    /// sweeps (and at the end). `Break` cancels the run.
    pub fn run(
        &mut self,
        report_every: u64,
        mut on_progress: impl FnMut(&Sampler) -> ControlFlow<()>,
    ) -> Result<(), SamplerError> {
        while !self.is_done() {
            self.step()?;
            if report_every > 0 && (self.iteration % report_every == 0 || self.is_done()) {
                if let ControlFlow::Break(()) = on_progress(self) {
                    return Err(SamplerError::Cancelled(self.iteration));
                }
            }
        }
        Ok(())
    }

    /// Unnormalised log posterior of the current state.
    pub fn log_posterior(&self) -> f64 {
        let g = self.hyper.to_globals();
        let subjects = self.subjects();
        let lambdas: Vec<f64> = subjects.iter().map(|s| s.lambda).collect();
        let mut lp = hyper_logprior(&g, &lambdas);
        for ((p, sp), support) in self.patients.iter().zip(&subjects).zip(&self.supports) {
            lp += joint_loglik(p, sp, &g) + random_effects_logpdf(sp, &g, p) + support.logmass(sp.tau);
        }
        lp
    }

    /// Acceptance rates pooled over patients (subject families) and over
    /// components (hyperparameter groups).
    pub fn acceptance(&self) -> Vec<AcceptanceRate> {
        let mut out = Vec::new();
        let pool = |f: &dyn Fn(&SubjectAdapters) -> (AcceptCounter, AcceptCounter)| {
            let mut late = AcceptCounter::default();
            let mut samp = AcceptCounter::default();
            for s in &self.states {
                let (l, m) = f(&s.adapters);
                late.merge(&l);
                samp.merge(&m);
            }
            (late.rate(), samp.rate())
        };
        for (k, coord) in SubjectCoord::ALL.iter().enumerate() {
            let (late, samp) = pool(&|a| (a.coords[k].late_burn_in, a.coords[k].sampling));
            out.push(AcceptanceRate { name: coord.name().into(), late_burn_in: late, sampling: samp, adaptive: true });
        }
        let (late, samp) = pool(&|a| (a.tau_ramp.late_burn_in, a.tau_ramp.sampling));
        out.push(AcceptanceRate { name: "tau_ramp".into(), late_burn_in: late, sampling: samp, adaptive: true });
        let (late, samp) = pool(&|a| (a.tau_indep_late, a.tau_indep_sampling));
        out.push(AcceptanceRate { name: "tau_prior".into(), late_burn_in: late, sampling: samp, adaptive: false });

        let mut groups: Vec<(&'static str, AcceptCounter, AcceptCounter)> = Vec::new();
        for (c, a) in self.hyper.components().into_iter().zip(&self.hyper_adapters) {
            let entry = match groups.iter_mut().find(|g| g.0 == c.group()) {
                Some(e) => e,
                None => {
                    groups.push((c.group(), AcceptCounter::default(), AcceptCounter::default()));
                    groups.last_mut().unwrap()
                }
            };
            entry.1.merge(&a.late_burn_in);
            entry.2.merge(&a.sampling);
        }
        out.extend(groups.into_iter().map(|(name, l, s)| AcceptanceRate {
            name: name.into(),
            late_burn_in: l.rate(),
            sampling: s.rate(),
            adaptive: true,
        }));
        for (family, a) in ScaleFamily::for_state(&self.hyper).into_iter().zip(&self.scale_adapters) {
            out.push(AcceptanceRate {
                name: family.name().into(),
                late_burn_in: a.late_burn_in.rate(),
                sampling: a.sampling.rate(),
                adaptive: true,
            });
        }
        out
    }

    pub fn progress(&self) -> Progress {
        Progress {
            iteration: self.iteration,
            total: self.cfg.iterations,
            log_posterior: self.log_posterior(),
            acceptance: self.acceptance(),
        }
    }

    pub fn into_samples(self) -> PosteriorSamples<f64> {
        PosteriorSamples {
            meta: self.cfg.meta(),
            patient_ids: self.patients.iter().map(|p| p.id.clone()).collect(),
            draws: self.draws,
        }
    }
}

/// Runs a full chain and returns the thinned post-burn-in draws.
pub fn run_chain(
    cfg: ChainConfig,
    cohort: &[PatientRecord<f64>],
    spec: ModelSpec,
) -> Result<PosteriorSamples<f64>, SamplerError> {
    let mut sampler = Sampler::new(cfg, cohort, spec)?;
    sampler.run(0, |_| ControlFlow::Continue(()))?;
    Ok(sampler.into_samples())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        ChainConfig::default().validate().unwrap();
        assert_eq!(ChainConfig::default().meta().retained(), 5000);
        assert!(ChainConfig::new(100, 100, 1, 0).validate().is_err());
        assert!(ChainConfig::new(100, 10, 0, 0).validate().is_err());
        assert!(ChainConfig::new(100, 10, 7, 0).validate().is_err());
        assert!(ChainConfig { adapt_decay: 0.5, ..ChainConfig::default() }.validate().is_err());
    }

    #[test]
    fn phases() {
        let c = ChainConfig::new(200, 100, 1, 0);
        assert_eq!(c.phase(0), Phase::EarlyBurnIn);
        assert_eq!(c.phase(79), Phase::EarlyBurnIn);
        assert_eq!(c.phase(80), Phase::LateBurnIn);
        assert_eq!(c.phase(99), Phase::LateBurnIn);
        assert_eq!(c.phase(100), Phase::Sampling);
    }

    #[test]
    fn streams_differ() {
        let mut a = patient_rng(1, 0);
        let mut b = patient_rng(1, 1);
        let mut g = global_rng(1);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), g.random());
        assert!(x != y && y != z && x != z);
    }
}
