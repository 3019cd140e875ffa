//! Exact Pólya-gamma PG(1, c) sampler.
//!
//! Devroye-style alternating-series rejection: the proposal is a mixture of
//! a truncated inverse Gaussian on `(0, 0.64]` and an exponential tail on
//! `(0.64, ∞)`, and the Jacobi density series is evaluated until the
//! partial sums bracket the uniform.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;
/// Upper bound on outer rejection rounds; hitting it means a bug, not bad luck.
pub const RETRY_CAP: usize = 10_000;

/// One draw together with the tilt it was drawn at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyaGammaDraw {
    pub value: f64,
    pub tilt: f64,
}

impl PolyaGammaDraw {
    /// Shape parameter; this sampler only handles `b = 1`.
    pub const SHAPE: f64 = 1.0;
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, with limit 1/4 at zero.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Var[PG(1, c)]`, with limit 1/24 at zero.
pub fn pg_variance(c: f64) -> f64 {
    let c = c.abs();
    let sech = 1.0 / (0.5 * c).cosh();
    if c < 1.0 {
        // (sinh c − c) / c³ by its series to avoid cancellation
        let (mut term, mut sum, mut k) = (1.0 / 6.0, 0.0, 3.0);
        while term > 1e-18 {
            sum += term;
            term *= c * c / ((k + 1.0) * (k + 2.0));
            k += 2.0;
        }
        sum * sech * sech / 4.0
    } else {
        (c.sinh() - c) * sech * sech / (4.0 * c * c * c)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability of taking the exponential-tail proposal.
fn tail_mass(z: f64) -> f64 {
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / TRUNC).sqrt() * (TRUNC * z - 1.0);
    let a = -(1.0 / TRUNC).sqrt() * (TRUNC * z + 1.0);
    let x0 = fz.ln() + fz * TRUNC;
    let xb = x0 - z + std_normal_cdf(b).ln();
    let xa = x0 + z + std_normal_cdf(a).ln();
    // underflows to 0 for large z, where the tail is never needed
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse Gaussian IG(1/z, 1) truncated to `(0, TRUNC]`.
fn truncated_inv_gauss<R: Rng + ?Sized>(rng: &mut R, z: f64) -> f64 {
    if z < TRUNC_RECIP {
        // mean beyond the truncation point: Lévy proposal, then accept on the tilt
        loop {
            let e1 = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break e1;
                }
            };
            let x = 1.0 + e1 * TRUNC;
            let x = TRUNC / (x * x);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let y: f64 = StandardNormal.sample(rng);
            let y = y * y;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}

/// n-th coefficient of the alternating series for the Jacobi density.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (1.5 * (FRAC_2_PI / x).ln() + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Exact draw from PG(1, c).
pub fn pg_draw<R: Rng + ?Sized>(rng: &mut R, c: f64) -> f64 {
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_tail = tail_mass(z);
    for _ in 0..RETRY_CAP {
        let x = if rng.random::<f64>() < p_tail {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inv_gauss(rng, z)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
    panic!("Polya-gamma sampler exceeded {RETRY_CAP} rejection rounds for c = {c}");
}

/// Draw wrapped with its tilt.
pub fn pg_draw_tagged<R: Rng + ?Sized>(rng: &mut R, c: f64) -> PolyaGammaDraw {
    PolyaGammaDraw { value: pg_draw(rng, c), tilt: c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_are_positive_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &c in &[0.0, 1e-8, 0.3, 5.0, 50.0, 400.0, -7.0] {
            for _ in 0..200 {
                let x = pg_draw(&mut rng, c);
                assert!(x > 0.0 && x.is_finite(), "c={c} x={x}");
            }
        }
    }

    #[test]
    fn moment_formulas_are_continuous_at_zero() {
        assert!((pg_mean(0.0) - 0.25).abs() < 1e-15);
        assert!((pg_mean(1e-6) - pg_mean(2e-6)).abs() < 1e-12);
        assert!((pg_variance(1e-3) - pg_variance(1.1e-3)).abs() < 1e-8);
        assert!((pg_variance(1.0 - 1e-12) - pg_variance(1.0)).abs() < 1e-12);
        assert!((pg_variance(0.0) - 1.0 / 24.0).abs() < 1e-15);
        assert!((pg_mean(2.0) - 0.19039853898894116).abs() < 1e-12);
        assert_eq!(pg_mean(-3.0), pg_mean(3.0));
    }

    #[test]
    fn tail_mass_is_a_probability() {
        for &z in &[0.0, 0.5, 2.0, 20.0, 300.0] {
            let p = tail_mass(z);
            assert!((0.0..=1.0).contains(&p), "z={z} p={p}");
        }
    }
}
