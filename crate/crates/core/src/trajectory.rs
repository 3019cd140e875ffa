//! Latent log-PSA trajectory and the positivity link.
//!
//! Before the change point the log-PSA declines linearly; after it, the
//! curve relaxes exponentially (log-Gompertz) from its value at the change
//! point toward the asymptote `a`.

use crate::params::{GlobalParams, SubjectParams};
use crate::scalar::{inv_logit, softplus, Real};

/// Latent `log x(t)`. The boundary `t = τ` belongs to the linear branch.
pub fn log_psa_trajectory<T: Real>(sp: &SubjectParams<T>, t: T) -> T {
    if t <= sp.tau {
        sp.lambda - sp.mu * t
    } else {
        let at_tau = sp.lambda - sp.mu * sp.tau;
        let w = (-sp.gamma * (t - sp.tau)).exp();
        at_tau * w + sp.a * (T::one() - w)
    }
}

/// Linear predictor `β₀ᵢ + β₁ log x + β₂ t`.
pub fn linear_predictor<T: Real>(beta0: T, beta1: T, beta2: T, log_x: T, t: T) -> T {
    beta0 + beta1 * log_x + beta2 * t
}

/// Probability of a positive exam given latent log-PSA `log_x` at time `t`.
pub fn positivity_prob<T: Real>(g: &GlobalParams<T>, cov_beta: &[T], log_x: T, t: T) -> T {
    inv_logit(linear_predictor(g.beta0(cov_beta), g.beta1, g.beta2, log_x, t))
}

/// Bernoulli log-mass of outcome `z` under logit `eta`, evaluated through
/// `softplus` so saturated probabilities never hit `ln 0`.
pub fn bernoulli_logit_logmass<T: Real>(z: bool, eta: T) -> T {
    if z {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(lambda: f64, mu: f64, gamma: f64, a: f64, tau: f64) -> SubjectParams<f64> {
        SubjectParams { lambda, mu, gamma, a, tau, sigma2: 1.0 }
    }

    fn zero_globals(beta0: f64, beta1: f64, beta2: f64) -> GlobalParams<f64> {
        GlobalParams {
            alpha_mu: vec![0.0],
            alpha_gamma: vec![0.0],
            alpha_beta: vec![beta0],
            beta1,
            beta2,
            psi_a: 0.0,
            omega_mu2: 1.0,
            omega_gamma2: 1.0,
            omega_a2: 1.0,
            ig_a: 3.0,
            ig_b: 1.0,
            lambda: None,
        }
    }

    #[test]
    fn linear_phase() {
        assert_eq!(log_psa_trajectory(&sp(0.0, 1.0, 1.0, 0.0, 5.0), 3.0), -3.0);
    }

    #[test]
    fn continuity_at_change_point() {
        let p = sp(1.0, 0.1, 0.7, -2.0, 10.0);
        assert_abs_diff_eq!(log_psa_trajectory(&p, 10.0), 0.0, epsilon = 1e-15);
        let right = p.lambda - p.mu * p.tau;
        assert_abs_diff_eq!(log_psa_trajectory(&p, 10.0 + 1e-12), right, epsilon = 1e-10);
    }

    #[test]
    fn gompertz_phase_value() {
        let p = sp(1.0, 0.1, 0.2, 3.0, 10.0);
        assert_abs_diff_eq!(log_psa_trajectory(&p, 15.0), 1.896361676485673, epsilon = 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let p = SubjectParams { lambda: 1.0_f32, mu: 0.1, gamma: 0.2, a: 3.0, tau: 10.0, sigma2: 1.0 };
        assert!((log_psa_trajectory(&p, 15.0_f32) - 1.896_361_7).abs() < 1e-5);
    }

    #[test]
    fn link_values() {
        let g = zero_globals(0.0, 0.0, 0.0);
        assert_eq!(positivity_prob(&g, &[1.0], 3.0, 7.0), 0.5);

        let g = zero_globals(1.0, 2.0, 0.1);
        assert_abs_diff_eq!(positivity_prob(&g, &[1.0], 0.5, 3.0), 0.9088770389851438, epsilon = 1e-14);
    }

    #[test]
    fn link_vanishes_as_psa_vanishes() {
        let g = zero_globals(1.0, 2.0, 0.1);
        let p = positivity_prob(&g, &[1.0], -1e3, 3.0);
        assert!(p >= 0.0 && p < 1e-300);
        assert!(positivity_prob(&g, &[1.0], 1e3, 3.0) <= 1.0);
    }

    #[test]
    fn bernoulli_logmass_is_finite_when_saturated() {
        assert_abs_diff_eq!(bernoulli_logit_logmass(true, 2.3_f64), -0.09554546459796298, epsilon = 1e-14);
        assert_abs_diff_eq!(bernoulli_logit_logmass(true, -800.0_f64), -800.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bernoulli_logit_logmass(false, 800.0_f64), -800.0, epsilon = 1e-9);
        assert_eq!(bernoulli_logit_logmass(false, -800.0_f64), 0.0);
    }
}
