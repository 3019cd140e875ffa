//! Random-walk updates of the population-level hyperparameters.
//!
//! Every hyperparameter is moved on an unconstrained scale carrying an
//! N(0, 100) prior: the regression coefficients and `ψ` directly, the
//! random-effect standard deviations through their logarithm, and the
//! inverse-gamma pair through the log mean and log variance of `σ²`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use psma_core::density::{ig_log_mean_var, inv_gamma_logpdf, map_ig_hyper, normal_logpdf, prior_logpdf};
use psma_core::{joint_loglik, GlobalParams, LambdaHyper, LambdaMode, PatientRecord, SubjectParams};

use crate::adapt::ScalarAdapter;
use crate::subject::SweepCtx;

/// Dimensions and switches that fix the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lambda_mode: LambdaMode,
    pub p_mu: usize,
    pub p_gamma: usize,
    pub p_beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaHyperState {
    pub psi: f64,
    pub log_omega: f64,
}

/// Hyperparameters on their sampling scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub alpha_mu: Vec<f64>,
    pub alpha_gamma: Vec<f64>,
    pub alpha_beta: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub psi_a: f64,
    pub log_omega_mu: f64,
    pub log_omega_gamma: f64,
    pub log_omega_a: f64,
    pub log_sigma_mean: f64,
    pub log_sigma_var: f64,
    pub lambda: Option<LambdaHyperState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperComponent {
    AlphaMu(usize),
    AlphaGamma(usize),
    PsiA,
    LogOmegaMu,
    LogOmegaGamma,
    LogOmegaA,
    LogSigmaMean,
    LogSigmaVar,
    PsiLambda,
    LogOmegaLambda,
}

impl HyperComponent {
    pub fn group(self) -> &'static str {
        match self {
            Self::AlphaMu(_) => "alpha_mu",
            Self::AlphaGamma(_) => "alpha_gamma",
            Self::PsiA => "psi_a",
            Self::LogOmegaMu | Self::LogOmegaGamma | Self::LogOmegaA | Self::LogOmegaLambda => "log_omega",
            Self::LogSigmaMean | Self::LogSigmaVar => "sigma2_hyper",
            Self::PsiLambda => "psi_lambda",
        }
    }
}

impl HyperState {
    /// Every unconstrained hyperparameter at its prior mean (zero).
    pub fn at_prior_mean(spec: &ModelSpec) -> Self {
        Self {
            alpha_mu: vec![0.0; spec.p_mu],
            alpha_gamma: vec![0.0; spec.p_gamma],
            alpha_beta: vec![0.0; spec.p_beta],
            beta1: 0.0,
            beta2: 0.0,
            psi_a: 0.0,
            log_omega_mu: 0.0,
            log_omega_gamma: 0.0,
            log_omega_a: 0.0,
            log_sigma_mean: 0.0,
            log_sigma_var: 0.0,
            lambda: (spec.lambda_mode == LambdaMode::Random).then_some(LambdaHyperState { psi: 0.0, log_omega: 0.0 }),
        }
    }

    pub fn to_globals(&self) -> GlobalParams<f64> {
        let (ig_a, ig_b) = map_ig_hyper(self.log_sigma_mean, self.log_sigma_var);
        GlobalParams {
            alpha_mu: self.alpha_mu.clone(),
            alpha_gamma: self.alpha_gamma.clone(),
            alpha_beta: self.alpha_beta.clone(),
            beta1: self.beta1,
            beta2: self.beta2,
            psi_a: self.psi_a,
            omega_mu2: (2.0 * self.log_omega_mu).exp(),
            omega_gamma2: (2.0 * self.log_omega_gamma).exp(),
            omega_a2: (2.0 * self.log_omega_a).exp(),
            ig_a,
            ig_b,
            lambda: self.lambda.map(|l| LambdaHyper { psi: l.psi, omega2: (2.0 * l.log_omega).exp() }),
        }
    }

    pub fn from_globals(g: &GlobalParams<f64>) -> Self {
        let (log_sigma_mean, log_sigma_var) = ig_log_mean_var(g.ig_a, g.ig_b);
        Self {
            alpha_mu: g.alpha_mu.clone(),
            alpha_gamma: g.alpha_gamma.clone(),
            alpha_beta: g.alpha_beta.clone(),
            beta1: g.beta1,
            beta2: g.beta2,
            psi_a: g.psi_a,
            log_omega_mu: 0.5 * g.omega_mu2.ln(),
            log_omega_gamma: 0.5 * g.omega_gamma2.ln(),
            log_omega_a: 0.5 * g.omega_a2.ln(),
            log_sigma_mean,
            log_sigma_var,
            lambda: g.lambda.map(|l| LambdaHyperState { psi: l.psi, log_omega: 0.5 * l.omega2.ln() }),
        }
    }

    /// Components updated by random-walk Metropolis, in sweep order.
    pub fn components(&self) -> Vec<HyperComponent> {
        let mut out: Vec<HyperComponent> = (0..self.alpha_mu.len()).map(HyperComponent::AlphaMu).collect();
        out.extend((0..self.alpha_gamma.len()).map(HyperComponent::AlphaGamma));
        out.extend([
            HyperComponent::PsiA,
            HyperComponent::LogOmegaMu,
            HyperComponent::LogOmegaGamma,
            HyperComponent::LogOmegaA,
            HyperComponent::LogSigmaMean,
            HyperComponent::LogSigmaVar,
        ]);
        if self.lambda.is_some() {
            out.extend([HyperComponent::PsiLambda, HyperComponent::LogOmegaLambda]);
        }
        out
    }

    pub fn get(&self, c: HyperComponent) -> f64 {
        match c {
            HyperComponent::AlphaMu(k) => self.alpha_mu[k],
            HyperComponent::AlphaGamma(k) => self.alpha_gamma[k],
            HyperComponent::PsiA => self.psi_a,
            HyperComponent::LogOmegaMu => self.log_omega_mu,
            HyperComponent::LogOmegaGamma => self.log_omega_gamma,
            HyperComponent::LogOmegaA => self.log_omega_a,
            HyperComponent::LogSigmaMean => self.log_sigma_mean,
            HyperComponent::LogSigmaVar => self.log_sigma_var,
            HyperComponent::PsiLambda => self.lambda.expect("lambda hyper").psi,
            HyperComponent::LogOmegaLambda => self.lambda.expect("lambda hyper").log_omega,
        }
    }

    pub fn set(&mut self, c: HyperComponent, v: f64) {
        match c {
            HyperComponent::AlphaMu(k) => self.alpha_mu[k] = v,
            HyperComponent::AlphaGamma(k) => self.alpha_gamma[k] = v,
            HyperComponent::PsiA => self.psi_a = v,
            HyperComponent::LogOmegaMu => self.log_omega_mu = v,
            HyperComponent::LogOmegaGamma => self.log_omega_gamma = v,
            HyperComponent::LogOmegaA => self.log_omega_a = v,
            HyperComponent::LogSigmaMean => self.log_sigma_mean = v,
            HyperComponent::LogSigmaVar => self.log_sigma_var = v,
            HyperComponent::PsiLambda => self.lambda.as_mut().expect("lambda hyper").psi = v,
            HyperComponent::LogOmegaLambda => self.lambda.as_mut().expect("lambda hyper").log_omega = v,
        }
    }

    /// Logistic coefficients in the order `(α_β…, β₁, β₂)`.
    pub fn logistic_coefs(&self) -> Vec<f64> {
        let mut v = self.alpha_beta.clone();
        v.push(self.beta1);
        v.push(self.beta2);
        v
    }

    pub fn set_logistic_coefs(&mut self, coefs: &[f64]) {
        let p = self.alpha_beta.len();
        self.alpha_beta.copy_from_slice(&coefs[..p]);
        self.beta1 = coefs[p];
        self.beta2 = coefs[p + 1];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Prior plus the sum over patients of the random-effect terms that
/// depend on component `c`.
pub fn component_log_target(
    h: &HyperState,
    c: HyperComponent,
    patients: &[PatientRecord<f64>],
    subjects: &[SubjectParams<f64>],
) -> f64 {
    let prior = prior_logpdf(h.get(c));
    let pairs = patients.iter().zip(subjects);
    let family: f64 = match c {
        HyperComponent::AlphaMu(_) | HyperComponent::LogOmegaMu => {
            let var = (2.0 * h.log_omega_mu).exp();
            pairs.map(|(p, s)| normal_logpdf(s.mu.ln(), dot(&p.cov_mu, &h.alpha_mu), var)).sum()
        }
        HyperComponent::AlphaGamma(_) | HyperComponent::LogOmegaGamma => {
            let var = (2.0 * h.log_omega_gamma).exp();
            pairs.map(|(p, s)| normal_logpdf(s.gamma.ln(), dot(&p.cov_gamma, &h.alpha_gamma), var)).sum()
        }
        HyperComponent::PsiA | HyperComponent::LogOmegaA => {
            let var = (2.0 * h.log_omega_a).exp();
            subjects.iter().map(|s| normal_logpdf(s.a, h.psi_a, var)).sum()
        }
        HyperComponent::LogSigmaMean | HyperComponent::LogSigmaVar => {
            let (shape, scale) = map_ig_hyper(h.log_sigma_mean, h.log_sigma_var);
            if !(shape.is_finite() && scale.is_finite() && scale > 0.0) {
                return f64::NEG_INFINITY;
            }
            subjects.iter().map(|s| inv_gamma_logpdf(s.sigma2, shape, scale)).sum()
        }
        HyperComponent::PsiLambda | HyperComponent::LogOmegaLambda => {
            let l = h.lambda.expect("lambda hyper");
            let var = (2.0 * l.log_omega).exp();
            subjects.iter().map(|s| normal_logpdf(s.lambda, l.psi, var)).sum()
        }
    };
    if family.is_nan() {
        return f64::NEG_INFINITY;
    }
    prior + family
}

/// One random-walk Metropolis step on a single hyperparameter.
pub fn hyper_step<R: Rng + ?Sized>(
    rng: &mut R,
    h: &mut HyperState,
    c: HyperComponent,
    patients: &[PatientRecord<f64>],
    subjects: &[SubjectParams<f64>],
    adapter: &mut ScalarAdapter,
    ctx: &SweepCtx,
) -> bool {
    let current = h.get(c);
    let cur_target = component_log_target(h, c, patients, subjects);
    let noise: f64 = StandardNormal.sample(rng);
    h.set(c, current + adapter.step() * noise);
    let new_target = component_log_target(h, c, patients, subjects);
    let log_ratio = new_target - cur_target;
    let (p, ok) = if log_ratio >= 0.0 {
        (1.0, true)
    } else if log_ratio.is_finite() {
        let p = log_ratio.exp();
        (p, rng.random::<f64>() < p)
    } else {
        (0.0, false)
    };
    if !ok {
        h.set(c, current);
    }
    adapter.observe(p, ok, ctx.iteration, ctx.phase, &ctx.adapt);
    ok
}

/// Sweeps every random-walk hyperparameter once; `adapters` is indexed like
/// [`HyperState::components`].
pub fn update_hypers<R: Rng + ?Sized>(
    rng: &mut R,
    h: &HyperState,
    patients: &[PatientRecord<f64>],
    subjects: &[SubjectParams<f64>],
    adapters: &mut [ScalarAdapter],
    ctx: &SweepCtx,
) -> HyperState {
    let mut out = h.clone();
    for (c, adapter) in h.components().into_iter().zip(adapters.iter_mut()) {
        hyper_step(rng, &mut out, c, patients, subjects, adapter, ctx);
    }
    out
}

/// Random-effect families that get a joint scale move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleFamily {
    Mu,
    Gamma,
    A,
    Lambda,
    /// Log variance of `σ²`, spreading `log σ²` about the log mean.
    Sigma2,
}

impl ScaleFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mu => "scale_mu",
            Self::Gamma => "scale_gamma",
            Self::A => "scale_a",
            Self::Lambda => "scale_lambda",
            Self::Sigma2 => "scale_sigma2",
        }
    }

    pub fn for_state(h: &HyperState) -> Vec<ScaleFamily> {
        let mut out = vec![Self::Mu, Self::Gamma, Self::A];
        if h.lambda.is_some() {
            out.push(Self::Lambda);
        }
        out.push(Self::Sigma2);
        out
    }

    fn log_omega(self, h: &HyperState) -> f64 {
        match self {
            Self::Mu => h.log_omega_mu,
            Self::Gamma => h.log_omega_gamma,
            Self::A => h.log_omega_a,
            Self::Lambda => h.lambda.expect("lambda hyper").log_omega,
            Self::Sigma2 => h.log_sigma_var,
        }
    }

    fn set_log_omega(self, h: &mut HyperState, v: f64) {
        match self {
            Self::Mu => h.log_omega_mu = v,
            Self::Gamma => h.log_omega_gamma = v,
            Self::A => h.log_omega_a = v,
            Self::Lambda => h.lambda.as_mut().expect("lambda hyper").log_omega = v,
            Self::Sigma2 => h.log_sigma_var = v,
        }
    }

    /// Rescales the deviation of one patient's effect from its mean.
    fn rescale(self, h: &HyperState, p: &PatientRecord<f64>, sp: &SubjectParams<f64>, ratio: f64) -> SubjectParams<f64> {
        let mut out = *sp;
        match self {
            Self::Mu => {
                let m = dot(&p.cov_mu, &h.alpha_mu);
                out.mu = (m + ratio * (sp.mu.ln() - m)).exp();
            }
            Self::Gamma => {
                let m = dot(&p.cov_gamma, &h.alpha_gamma);
                out.gamma = (m + ratio * (sp.gamma.ln() - m)).exp();
            }
            Self::A => out.a = h.psi_a + ratio * (sp.a - h.psi_a),
            Self::Lambda => {
                let psi = h.lambda.expect("lambda hyper").psi;
                out.lambda = psi + ratio * (sp.lambda - psi);
            }
            Self::Sigma2 => out.sigma2 = (h.log_sigma_mean + ratio * (sp.sigma2.ln() - h.log_sigma_mean)).exp(),
        }
        out
    }
}

/// Log acceptance ratio of moving `family`'s log standard deviation to
/// `new`, with the proposed subjects and their log-likelihoods.
pub fn scale_log_ratio(
    h: &HyperState,
    family: ScaleFamily,
    patients: &[PatientRecord<f64>],
    subjects: &[SubjectParams<f64>],
    current_ll: &[f64],
    new: f64,
) -> (f64, Vec<SubjectParams<f64>>, Vec<f64>) {
    let g = h.to_globals();
    let old = family.log_omega(h);
    // the sigma2 family moves a log variance, the others a log sd
    let ratio = match family {
        ScaleFamily::Sigma2 => (0.5 * (new - old)).exp(),
        _ => (new - old).exp(),
    };
    let proposed: Vec<SubjectParams<f64>> =
        patients.iter().zip(subjects).map(|(p, sp)| family.rescale(h, p, sp, ratio)).collect();
    let new_ll: Vec<f64> = patients.iter().zip(&proposed).map(|(p, sp)| joint_loglik(p, sp, &g)).collect();
    // effects that leave the floating-point range are treated as outside the support
    if !proposed.iter().all(|sp| sp.validate().is_ok()) {
        return (f64::NEG_INFINITY, proposed, new_ll);
    }
    let delta: f64 = new_ll.iter().zip(current_ll).map(|(a, b)| a - b).sum();
    let mut log_ratio = prior_logpdf(new) - prior_logpdf(old) + delta;
    if family == ScaleFamily::Sigma2 {
        // inverse-gamma effects do not cancel: add their densities and the
        // Jacobian of the map on the natural scale
        let (s0, b0) = map_ig_hyper(h.log_sigma_mean, old);
        let (s1, b1) = map_ig_hyper(h.log_sigma_mean, new);
        let n = subjects.len() as f64;
        let mut extra = n * ratio.ln();
        for (sp, np) in subjects.iter().zip(&proposed) {
            extra += inv_gamma_logpdf(np.sigma2, s1, b1) - inv_gamma_logpdf(sp.sigma2, s0, b0);
            extra += np.sigma2.ln() - sp.sigma2.ln();
        }
        log_ratio += if extra.is_nan() { f64::NEG_INFINITY } else { extra };
    }
    (log_ratio, proposed, new_ll)
}

/// Joint move of a random-effect standard deviation and every patient's
/// effect, holding the standardised effects fixed. For the normal families
/// the random-effect densities and the Jacobian cancel, leaving the
/// hyperprior and the data likelihood in the ratio. `current_ll` holds each patient's joint
/// log-likelihood and is kept in sync with `subjects`.
#[allow(clippy::too_many_arguments)]
pub fn scale_step<R: Rng + ?Sized>(
    rng: &mut R,
    h: &mut HyperState,
    family: ScaleFamily,
    patients: &[PatientRecord<f64>],
    subjects: &mut [SubjectParams<f64>],
    current_ll: &mut [f64],
    adapter: &mut ScalarAdapter,
    ctx: &SweepCtx,
) -> bool {
    let old = family.log_omega(h);
    let noise: f64 = StandardNormal.sample(rng);
    let new = old + adapter.step() * noise;
    let (log_ratio, proposed, new_ll) = scale_log_ratio(h, family, patients, subjects, current_ll, new);
    let (p, ok) = if log_ratio >= 0.0 {
        (1.0, true)
    } else if log_ratio.is_finite() {
        let p = log_ratio.exp();
        (p, rng.random::<f64>() < p)
    } else {
        (0.0, false)
    };
    if ok {
        family.set_log_omega(h, new);
        subjects.copy_from_slice(&proposed);
        current_ll.copy_from_slice(&new_ll);
    }
    adapter.observe(p, ok, ctx.iteration, ctx.phase, &ctx.adapt);
    ok
}

pub fn initial_hyper_adapters(h: &HyperState) -> Vec<ScalarAdapter> {
    h.components().iter().map(|_| ScalarAdapter::new(0.1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn globals_round_trip() {
        let spec = ModelSpec { lambda_mode: LambdaMode::Random, p_mu: 2, p_gamma: 2, p_beta: 3 };
        let mut h = HyperState::at_prior_mean(&spec);
        h.log_omega_a = -0.3;
        h.log_sigma_mean = 0.4;
        h.log_sigma_var = -1.0;
        let back = HyperState::from_globals(&h.to_globals());
        for c in h.components() {
            assert!((back.get(c) - h.get(c)).abs() < 1e-12, "{c:?}");
        }
        assert_eq!(h.components().len(), 2 + 2 + 6 + 2);
        let mut h2 = h.clone();
        h2.set_logistic_coefs(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(h2.logistic_coefs(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(h2.beta2, 5.0);
    }

    #[test]
    fn omega_is_positive_by_construction() {
        let spec = ModelSpec { lambda_mode: LambdaMode::Individual, p_mu: 1, p_gamma: 1, p_beta: 1 };
        let mut h = HyperState::at_prior_mean(&spec);
        h.log_omega_mu = -40.0;
        assert!(h.to_globals().omega_mu2 > 0.0);
    }
}
