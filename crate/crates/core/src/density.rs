//! Log-density terms of the hierarchical model.

use crate::params::{dot, GlobalParams, SubjectParams};
use crate::patient::PatientRecord;
use crate::scalar::{ln_gamma, Real};
use crate::trajectory::{bernoulli_logit_logmass, linear_predictor, log_psa_trajectory};

/// Variance of the Gaussian prior placed on every unconstrained hyperparameter.
pub const PRIOR_VARIANCE: f64 = 100.0;

pub fn normal_logpdf<T: Real>(x: T, mean: T, var: T) -> T {
    let d = x - mean;
    -T::lit(0.5) * ((T::TAU()) * var).ln() - d * d / (T::lit(2.0) * var)
}

/// Inverse-gamma log-density with shape `shape` and scale `scale`.
pub fn inv_gamma_logpdf<T: Real>(x: T, shape: T, scale: T) -> T {
    if !(x > T::zero()) {
        return T::neg_infinity();
    }
    if shape < T::lit(20.0) {
        return shape * scale.ln() - ln_gamma(shape) - (shape + T::one()) * x.ln() - scale / x;
    }
    // Stirling form: the large terms cancel analytically, so very large
    // shapes (nearly degenerate laws) keep their precision
    let r = scale / (shape * x);
    let inv = shape.recip();
    let stirling_rest = inv / T::lit(12.0) - inv.powi(3) / T::lit(360.0) + inv.powi(5) / T::lit(1260.0);
    T::lit(0.5) * (shape / T::TAU()).ln() - stirling_rest - shape * log_ratio_gap(r - T::one()) - x.ln()
}

/// `d − ln(1 + d)`, using the series near zero.
fn log_ratio_gap<T: Real>(d: T) -> T {
    if d.abs() >= T::lit(0.1) {
        return d - d.ln_1p();
    }
    let mut term = d * d;
    let mut sum = T::zero();
    for k in 2..40 {
        sum = sum + term / T::lit(k as f64);
        term = -term * d;
    }
    sum
}

/// Log-density of one PSA observation: `log y ~ N(log x(t), σ²)`.
pub fn psa_obs_loglik<T: Real>(sp: &SubjectParams<T>, t: T, y: T) -> T {
    normal_logpdf(y.ln(), log_psa_trajectory(sp, t), sp.sigma2)
}

/// Log-mass of one PET outcome given the logistic coefficients.
pub fn pet_obs_loglik<T: Real>(sp: &SubjectParams<T>, beta0: T, beta1: T, beta2: T, t: T, z: bool) -> T {
    let eta = linear_predictor(beta0, beta1, beta2, log_psa_trajectory(sp, t), t);
    bernoulli_logit_logmass(z, eta)
}

/// Sum of the PSA log-densities of one patient.
pub fn psa_loglik<T: Real>(patient: &PatientRecord<T>, sp: &SubjectParams<T>) -> T {
    patient
        .psa_obs
        .iter()
        .fold(T::zero(), |acc, o| acc + psa_obs_loglik(sp, o.t, o.y))
}

/// Sum of the PET log-masses of one patient.
pub fn pet_loglik<T: Real>(patient: &PatientRecord<T>, sp: &SubjectParams<T>, g: &GlobalParams<T>) -> T {
    let beta0 = g.beta0(&patient.cov_beta);
    patient.pet_obs.iter().fold(T::zero(), |acc, o| {
        acc + pet_obs_loglik(sp, beta0, g.beta1, g.beta2, o.t, o.z)
    })
}

/// Joint log-likelihood of a patient's PSA and PET series. The latent
/// trajectory is a deterministic function of the parameters, so nothing is
/// integrated out.
pub fn joint_loglik<T: Real>(patient: &PatientRecord<T>, sp: &SubjectParams<T>, g: &GlobalParams<T>) -> T {
    psa_loglik(patient, sp) + pet_loglik(patient, sp, g)
}

pub fn log_mu_logpdf<T: Real>(sp: &SubjectParams<T>, g: &GlobalParams<T>, cov_mu: &[T]) -> T {
    if !(sp.mu > T::zero()) {
        return T::neg_infinity();
    }
    normal_logpdf(sp.mu.ln(), dot(cov_mu, &g.alpha_mu), g.omega_mu2)
}

pub fn log_gamma_logpdf<T: Real>(sp: &SubjectParams<T>, g: &GlobalParams<T>, cov_gamma: &[T]) -> T {
    if !(sp.gamma > T::zero()) {
        return T::neg_infinity();
    }
    normal_logpdf(sp.gamma.ln(), dot(cov_gamma, &g.alpha_gamma), g.omega_gamma2)
}

pub fn asymptote_logpdf<T: Real>(sp: &SubjectParams<T>, g: &GlobalParams<T>) -> T {
    normal_logpdf(sp.a, g.psi_a, g.omega_a2)
}

pub fn sigma2_logpdf<T: Real>(sp: &SubjectParams<T>, g: &GlobalParams<T>) -> T {
    inv_gamma_logpdf(sp.sigma2, g.ig_a, g.ig_b)
}

/// Random-effect density of `λ`; zero when `λ` is an individual parameter.
pub fn lambda_re_logpdf<T: Real>(sp: &SubjectParams<T>, g: &GlobalParams<T>) -> T {
    match g.lambda {
        Some(h) => normal_logpdf(sp.lambda, h.psi, h.omega2),
        None => T::zero(),
    }
}

/// Second-level log-density of one patient's parameters: Normal terms for
/// `log μ`, `log γ`, `a` (and `λ` when it is a random effect) plus the
/// inverse-gamma term for `σ²`. Densities are with respect to the log scale
/// for `μ` and `γ`.
pub fn random_effects_logpdf<T: Real>(
    sp: &SubjectParams<T>,
    g: &GlobalParams<T>,
    patient: &PatientRecord<T>,
) -> T {
    log_mu_logpdf(sp, g, &patient.cov_mu)
        + log_gamma_logpdf(sp, g, &patient.cov_gamma)
        + asymptote_logpdf(sp, g)
        + sigma2_logpdf(sp, g)
        + lambda_re_logpdf(sp, g)
}

/// Inverse-gamma `(shape, scale)` from the log mean and log variance of `σ²`.
pub fn map_ig_hyper<T: Real>(log_mean: T, log_variance: T) -> (T, T) {
    let m = log_mean.exp();
    let v = log_variance.exp();
    let shape = T::lit(2.0) + m * m / v;
    (shape, m * (shape - T::one()))
}

/// Log mean and log variance of an inverse gamma with `shape > 2`.
pub fn ig_log_mean_var<T: Real>(shape: T, scale: T) -> (T, T) {
    let am1 = shape - T::one();
    let log_mean = scale.ln() - am1.ln();
    let log_var = T::lit(2.0) * log_mean - (shape - T::lit(2.0)).ln();
    (log_mean, log_var)
}

pub fn prior_logpdf<T: Real>(x: T) -> T {
    normal_logpdf(x, T::zero(), T::lit(PRIOR_VARIANCE))
}

/// N(0, 100) log-prior over the unconstrained hyperparameters: each
/// individual `λ`, the log standard deviations, `ψ_a`, the log mean and log
/// variance of `σ²`, and every regression coefficient.
pub fn hyper_logprior<T: Real>(g: &GlobalParams<T>, lambdas: &[T]) -> T {
    let half = T::lit(0.5);
    let (log_m, log_v) = ig_log_mean_var(g.ig_a, g.ig_b);
    let mut terms: Vec<T> = vec![
        half * g.omega_mu2.ln(),
        half * g.omega_gamma2.ln(),
        half * g.omega_a2.ln(),
        g.psi_a,
        log_m,
        log_v,
        g.beta1,
        g.beta2,
    ];
    terms.extend(&g.alpha_mu);
    terms.extend(&g.alpha_gamma);
    terms.extend(&g.alpha_beta);
    match g.lambda {
        Some(h) => {
            terms.push(h.psi);
            terms.push(half * h.omega2.ln());
        }
        None => terms.extend(lambdas),
    }
    terms.into_iter().fold(T::zero(), |acc, x| acc + prior_logpdf(x))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn ig_mapping_is_exact_inverse(log_m in -3.0f64..3.0, log_v in -6.0f64..6.0) {
            let (a, b) = map_ig_hyper(log_m, log_v);
            prop_assert!(a > 2.0);
            let (m2, v2) = ig_log_mean_var(a, b);
            prop_assert!((m2 - log_m).abs() < 1e-9);
            prop_assert!((v2 - log_v).abs() < 1e-9 * (1.0 + log_v.abs()));
        }
    }
}
