use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the model math is written against (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse logit, split on the sign of `x` so neither branch overflows.
pub fn inv_logit<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    T::lit(statrs::function::gamma::ln_gamma(x.as_f64()))
}

/// Stable `ln Σ exp(x_i)`; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_logit_survives_large_arguments() {
        assert_eq!(inv_logit(1000.0_f64), 1.0);
        assert_eq!(inv_logit(-1000.0_f64), 0.0);
        assert!((inv_logit(0.0_f32) - 0.5).abs() < 1e-7);
        assert!(softplus(1000.0_f64).is_finite());
        assert!((softplus(1000.0_f64) - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_matches_naive_in_safe_range() {
        let xs = [0.1_f64, -2.0, 1.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
        assert!((log_sum_exp(&[-1000.0_f64, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0_f64).abs() < 1e-12);
        assert!((ln_gamma(5.0_f64) - 24f64.ln()).abs() < 1e-12);
    }
}
