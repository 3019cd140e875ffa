//! Per-patient Metropolis updates: random-walk moves for the five scalar
//! subject parameters and the two change-point moves.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use psma_core::density::prior_logpdf;
use psma_core::{joint_loglik, random_effects_logpdf, GlobalParams, PatientRecord, SubjectParams, TauRegion, TauSupport};

use crate::adapt::{AcceptCounter, AdaptSettings, Phase, ScalarAdapter};

/// Subject parameters on the scale the random walk moves on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubjectCoord {
    Lambda,
    LogMu,
    LogGamma,
    A,
    LogSigma2,
}

impl SubjectCoord {
    pub const ALL: [SubjectCoord; 5] = [Self::Lambda, Self::LogMu, Self::LogGamma, Self::A, Self::LogSigma2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::LogMu => "log_mu",
            Self::LogGamma => "log_gamma",
            Self::A => "a",
            Self::LogSigma2 => "log_sigma2",
        }
    }

    pub fn get(self, sp: &SubjectParams<f64>) -> f64 {
        match self {
            Self::Lambda => sp.lambda,
            Self::LogMu => sp.mu.ln(),
            Self::LogGamma => sp.gamma.ln(),
            Self::A => sp.a,
            Self::LogSigma2 => sp.sigma2.ln(),
        }
    }

    pub fn with(self, sp: &SubjectParams<f64>, v: f64) -> SubjectParams<f64> {
        let mut out = *sp;
        match self {
            Self::Lambda => out.lambda = v,
            Self::LogMu => out.mu = v.exp(),
            Self::LogGamma => out.gamma = v.exp(),
            Self::A => out.a = v,
            Self::LogSigma2 => out.sigma2 = v.exp(),
        }
        out
    }

    fn initial_step(self) -> f64 {
        match self {
            Self::Lambda | Self::A => 0.5,
            Self::LogMu => 0.1,
            Self::LogGamma => 0.3,
            Self::LogSigma2 => 0.5,
        }
    }
}

/// Step sizes and acceptance counters for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectAdapters {
    pub coords: [ScalarAdapter; 5],
    pub tau_ramp: ScalarAdapter,
    pub tau_indep_late: AcceptCounter,
    pub tau_indep_sampling: AcceptCounter,
}

impl Default for SubjectAdapters {
    fn default() -> Self {
        Self {
            coords: SubjectCoord::ALL.map(|c| ScalarAdapter::new(c.initial_step())),
            tau_ramp: ScalarAdapter::new(1.0),
            tau_indep_late: AcceptCounter::default(),
            tau_indep_sampling: AcceptCounter::default(),
        }
    }
}

impl SubjectAdapters {
    /// Current step sizes: the five coordinates then the ramp walk.
    pub fn steps(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (o, a) in out.iter_mut().zip(&self.coords) {
            *o = a.step();
        }
        out[5] = self.tau_ramp.step();
        out
    }

    pub fn from_steps(steps: [f64; 6]) -> Self {
        let mut out = Self::default();
        for (a, s) in out.coords.iter_mut().zip(steps) {
            *a = ScalarAdapter::new(s);
        }
        out.tau_ramp = ScalarAdapter::new(steps[5]);
        out
    }
}

/// Unnormalised log full conditional of one patient's scalar parameters on
/// the random-walk scale (includes the `log σ²` Jacobian).
pub fn subject_log_target(patient: &PatientRecord<f64>, sp: &SubjectParams<f64>, g: &GlobalParams<f64>) -> f64 {
    let re = random_effects_logpdf(sp, g, patient);
    if !re.is_finite() {
        return f64::NEG_INFINITY;
    }
    let lambda_prior = if g.lambda.is_none() { prior_logpdf(sp.lambda) } else { 0.0 };
    let ll = joint_loglik(patient, sp, g);
    if ll.is_nan() {
        return f64::NEG_INFINITY;
    }
    ll + re + lambda_prior + sp.sigma2.ln()
}

/// Log Metropolis ratio for moving `from → to` with a symmetric proposal.
pub fn log_accept_ratio(
    patient: &PatientRecord<f64>,
    g: &GlobalParams<f64>,
    from: &SubjectParams<f64>,
    to: &SubjectParams<f64>,
) -> f64 {
    subject_log_target(patient, to, g) - subject_log_target(patient, from, g)
}

/// Context shared by the updates of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepCtx {
    pub iteration: u64,
    pub phase: Phase,
    pub adapt: AdaptSettings,
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> (f64, bool) {
    if log_ratio >= 0.0 {
        return (1.0, true);
    }
    if !log_ratio.is_finite() {
        return (0.0, false);
    }
    let p = log_ratio.exp();
    (p, rng.random::<f64>() < p)
}

/// One random-walk Metropolis step on a single coordinate. `target` carries
/// the current log target and is updated on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn coord_step<R: Rng + ?Sized>(
    rng: &mut R,
    patient: &PatientRecord<f64>,
    sp: &mut SubjectParams<f64>,
    target: &mut f64,
    g: &GlobalParams<f64>,
    coord: SubjectCoord,
    adapter: &mut ScalarAdapter,
    ctx: &SweepCtx,
) -> bool {
    let noise: f64 = StandardNormal.sample(rng);
    let proposal = coord.with(sp, coord.get(sp) + adapter.step() * noise);
    let new_target = subject_log_target(patient, &proposal, g);
    let (p, ok) = accept(rng, new_target - *target);
    if ok {
        *sp = proposal;
        *target = new_target;
    }
    adapter.observe(p, ok, ctx.iteration, ctx.phase, &ctx.adapt);
    ok
}

/// Sweeps the five scalar coordinates of one patient in turn.
pub fn update_subject_params<R: Rng + ?Sized>(
    rng: &mut R,
    patient: &PatientRecord<f64>,
    sp: &SubjectParams<f64>,
    g: &GlobalParams<f64>,
    adapters: &mut SubjectAdapters,
    ctx: &SweepCtx,
) -> SubjectParams<f64> {
    let mut cur = *sp;
    let mut target = subject_log_target(patient, &cur, g);
    for (coord, adapter) in SubjectCoord::ALL.into_iter().zip(adapters.coords.iter_mut()) {
        coord_step(rng, patient, &mut cur, &mut target, g, coord, adapter, ctx);
    }
    cur
}

/// Independence proposal from the change-point prior, accepted on the
/// likelihood ratio alone (the prior cancels). Returns the new value, its
/// log-likelihood and whether the move was accepted.
pub fn tau_independence_step<R: Rng + ?Sized>(
    rng: &mut R,
    support: &TauSupport<f64>,
    tau: f64,
    current_ll: f64,
    loglik: impl Fn(f64) -> f64,
) -> (f64, f64, bool) {
    let proposal = support.quantile(rng.random::<f64>());
    let ll = loglik(proposal);
    let (_, ok) = accept(rng, ll - current_ll);
    if ok {
        (proposal, ll, true)
    } else {
        (tau, current_ll, false)
    }
}

/// Gaussian random walk restricted to the ramp; only moves a change point
/// that already sits on the ramp, and rejects proposals leaving it.
pub fn tau_ramp_step<R: Rng + ?Sized>(
    rng: &mut R,
    support: &TauSupport<f64>,
    tau: f64,
    current_ll: f64,
    step: f64,
    loglik: impl Fn(f64) -> f64,
) -> Option<(f64, f64, f64, bool)> {
    if support.region(tau) != TauRegion::Ramp {
        return None;
    }
    let noise: f64 = StandardNormal.sample(rng);
    let proposal = tau + step * noise;
    if support.region(proposal) != TauRegion::Ramp {
        return Some((tau, current_ll, 0.0, false));
    }
    let ll = loglik(proposal);
    let (p, ok) = accept(rng, ll - current_ll);
    Some(if ok { (proposal, ll, p, true) } else { (tau, current_ll, p, false) })
}

/// Change-point update for one patient: a prior-independence move followed
/// by a ramp random walk.
pub fn update_tau<R: Rng + ?Sized>(
    rng: &mut R,
    patient: &PatientRecord<f64>,
    sp: &SubjectParams<f64>,
    g: &GlobalParams<f64>,
    support: &TauSupport<f64>,
    adapters: &mut SubjectAdapters,
    ctx: &SweepCtx,
) -> f64 {
    let loglik = |tau: f64| joint_loglik(patient, &SubjectParams { tau, ..*sp }, g);
    let ll0 = loglik(sp.tau);
    let (tau, ll, ok) = tau_independence_step(rng, support, sp.tau, ll0, loglik);
    match ctx.phase {
        Phase::LateBurnIn => adapters.tau_indep_late.record(ok),
        Phase::Sampling => adapters.tau_indep_sampling.record(ok),
        Phase::EarlyBurnIn => {}
    }
    match tau_ramp_step(rng, support, tau, ll, adapters.tau_ramp.step(), loglik) {
        Some((new_tau, _, p, ok)) => {
            adapters.tau_ramp.observe(p, ok, ctx.iteration, ctx.phase, &ctx.adapt);
            new_tau
        }
        None => tau,
    }
}
