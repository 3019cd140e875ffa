//! Subject-level and population-level parameter sets.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Latent parameters of one patient's PSA trajectory and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams<T> {
    /// Log-PSA intercept at surgery.
    pub lambda: T,
    /// Decline rate before the change point (per month).
    pub mu: T,
    /// Log-Gompertz rate after the change point (per month).
    pub gamma: T,
    /// Asymptotic log-PSA.
    pub a: T,
    /// Change point (months).
    pub tau: T,
    /// Log-scale measurement variance.
    pub sigma2: T,
}

impl<T: Real> SubjectParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.mu, self.gamma, self.a, self.tau, self.sigma2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams("non-finite subject parameter".into()));
        }
        if !(self.mu > T::zero() && self.gamma > T::zero() && self.sigma2 > T::zero()) {
            return Err(ModelError::InvalidParams("mu, gamma and sigma2 must be positive".into()));
        }
        if !(self.tau > T::zero()) {
            return Err(ModelError::InvalidParams("tau must be positive".into()));
        }
        Ok(())
    }
}

/// How the per-patient intercept `λ` enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Free per-patient parameter with its own N(0, 100) prior.
    #[default]
    Individual,
    /// Random effect `λ ~ N(ψ_λ, ω_λ²)`.
    Random,
}

/// Population mean and variance of `λ` when it is a random effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaHyper<T> {
    pub psi: T,
    pub omega2: T,
}

/// Population-level coefficients and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams<T> {
    pub alpha_mu: Vec<T>,
    pub alpha_gamma: Vec<T>,
    pub alpha_beta: Vec<T>,
    /// Log-PSA coefficient in the positivity link.
    pub beta1: T,
    /// Time coefficient in the positivity link.
    pub beta2: T,
    pub psi_a: T,
    pub omega_mu2: T,
    pub omega_gamma2: T,
    pub omega_a2: T,
    /// Inverse-gamma shape of `σ²`.
    pub ig_a: T,
    /// Inverse-gamma scale of `σ²`.
    pub ig_b: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaHyper<T>>,
}

impl<T: Real> GlobalParams<T> {
    pub fn lambda_mode(&self) -> LambdaMode {
        match self.lambda {
            Some(_) => LambdaMode::Random,
            None => LambdaMode::Individual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut variances = vec![self.omega_mu2, self.omega_gamma2, self.omega_a2, self.ig_a, self.ig_b];
        if let Some(l) = self.lambda {
            variances.push(l.omega2);
        }
        if variances.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(ModelError::InvalidParams(
                "variance components and inverse-gamma parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Patient-specific logistic intercept `β₀ᵢ = cov_beta · α_β`.
    pub fn beta0(&self, cov_beta: &[T]) -> T {
        dot(cov_beta, &self.alpha_beta)
    }

    /// Flat `(name, value)` listing in reporting order. Variance components
    /// are reported as variances.
    pub fn named_values(&self) -> Vec<(String, T)> {
        let mut out = Vec::with_capacity(self.alpha_mu.len() * 3 + 8);
        let vecs = [
            ("alpha_mu", &self.alpha_mu),
            ("alpha_gamma", &self.alpha_gamma),
            ("alpha_beta", &self.alpha_beta),
        ];
        for (name, v) in vecs {
            out.extend(v.iter().enumerate().map(|(k, &x)| (format!("{name}[{}]", k + 1), x)));
        }
        out.push(("beta1".into(), self.beta1));
        out.push(("beta2".into(), self.beta2));
        out.push(("omega_mu2".into(), self.omega_mu2));
        out.push(("omega_gamma2".into(), self.omega_gamma2));
        out.push(("psi_a".into(), self.psi_a));
        out.push(("omega_a2".into(), self.omega_a2));
        out.push(("ig_a".into(), self.ig_a));
        out.push(("ig_b".into(), self.ig_b));
        if let Some(l) = self.lambda {
            out.push(("psi_lambda".into(), l.psi));
            out.push(("omega_lambda2".into(), l.omega2));
        }
        out
    }
}

impl<T: Real> GlobalParams<T> {
    /// Number of values in [`named_values`](Self::named_values) for a layout.
    pub fn value_count(p_mu: usize, p_gamma: usize, p_beta: usize, mode: LambdaMode) -> usize {
        p_mu + p_gamma + p_beta + 8 + if mode == LambdaMode::Random { 2 } else { 0 }
    }

    /// Inverse of [`named_values`](Self::named_values), from the bare values.
    pub fn from_values(p_mu: usize, p_gamma: usize, p_beta: usize, mode: LambdaMode, values: &[T]) -> Result<Self> {
        let need = Self::value_count(p_mu, p_gamma, p_beta, mode);
        if values.len() != need {
            return Err(ModelError::Dimension(format!("expected {need} global values, got {}", values.len())));
        }
        let (alpha_mu, rest) = values.split_at(p_mu);
        let (alpha_gamma, rest) = rest.split_at(p_gamma);
        let (alpha_beta, rest) = rest.split_at(p_beta);
        Ok(Self {
            alpha_mu: alpha_mu.to_vec(),
            alpha_gamma: alpha_gamma.to_vec(),
            alpha_beta: alpha_beta.to_vec(),
            beta1: rest[0],
            beta2: rest[1],
            omega_mu2: rest[2],
            omega_gamma2: rest[3],
            psi_a: rest[4],
            omega_a2: rest[5],
            ig_a: rest[6],
            ig_b: rest[7],
            lambda: (mode == LambdaMode::Random).then(|| LambdaHyper { psi: rest[8], omega2: rest[9] }),
        })
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len(), "design row / coefficient length mismatch");
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn globals() -> GlobalParams<f64> {
        GlobalParams {
            alpha_mu: vec![1.0, 0.1],
            alpha_gamma: vec![-1.0, 0.0],
            alpha_beta: vec![1.0, 2.0],
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

    #[test]
    fn named_values_counts_and_order() {
        let g = globals();
        let names: Vec<_> = g.named_values().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 6 + 8);
        assert_eq!(names[0], "alpha_mu[1]");
        assert_eq!(names[6], "beta1");
        assert_eq!(names.last().unwrap(), "ig_b");
        assert_eq!(g.beta0(&[1.0, 0.5]), 2.0);
    }

    #[test]
    fn values_round_trip() {
        let mut g = globals();
        for mode in [LambdaMode::Individual, LambdaMode::Random] {
            g.lambda = (mode == LambdaMode::Random).then_some(LambdaHyper { psi: 0.3, omega2: 2.0 });
            let vals: Vec<f64> = g.named_values().into_iter().map(|(_, v)| v).collect();
            assert_eq!(vals.len(), GlobalParams::<f64>::value_count(2, 2, 2, mode));
            assert_eq!(GlobalParams::from_values(2, 2, 2, mode, &vals).unwrap(), g);
        }
        assert!(GlobalParams::from_values(2, 2, 2, LambdaMode::Individual, &[0.0; 3]).is_err());
    }

    #[test]
    fn validation_rejects_nonpositive_variance() {
        let mut g = globals();
        g.validate().unwrap();
        g.omega_a2 = 0.0;
        assert!(g.validate().is_err());
        let mut g = globals();
        g.lambda = Some(LambdaHyper { psi: 0.0, omega2: -1.0 });
        assert!(g.validate().is_err());
        assert_eq!(globals().lambda_mode(), LambdaMode::Individual);
    }

    #[test]
    fn subject_validation() {
        let sp = SubjectParams { lambda: 0.0, mu: 1.0, gamma: 1.0, a: 1.0, tau: 2.0, sigma2: 0.1 };
        sp.validate().unwrap();
        assert!(SubjectParams { mu: 0.0, ..sp }.validate().is_err());
        assert!(SubjectParams { sigma2: f64::NAN, ..sp }.validate().is_err());
    }
}
