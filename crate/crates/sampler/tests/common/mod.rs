#![allow(dead_code)]

use psma_core::{GlobalParams, PatientRecord, PetObs, PsaObs, SubjectParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn log_x(sp: &SubjectParams<f64>, t: f64) -> f64 {
    let at_tau = sp.lambda - sp.mu * sp.tau;
    if t <= sp.tau {
        sp.lambda - sp.mu * t
    } else {
        let e = (-sp.gamma * (t - sp.tau)).exp();
        at_tau * e + sp.a * (1.0 - e)
    }
}

pub fn globals() -> GlobalParams<f64> {
    GlobalParams {
        alpha_mu: vec![(0.2f64).ln()],
        alpha_gamma: vec![(0.5f64).ln()],
        alpha_beta: vec![0.5],
        beta1: 1.0,
        beta2: -0.02,
        psi_a: -1.0,
        omega_mu2: 0.1,
        omega_gamma2: 0.1,
        omega_a2: 1.0,
        ig_a: 3.0,
        ig_b: 0.5,
        lambda: None,
    }
}

pub fn subject() -> SubjectParams<f64> {
    SubjectParams { lambda: 1.5, mu: 0.2, gamma: 0.5, a: -1.0, tau: 9.0, sigma2: 0.3 }
}

/// PSA at fixed times around `sp`, plus two PET exams.
pub fn patient(id: &str, sp: &SubjectParams<f64>, seed: u64) -> PatientRecord<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sp.sigma2.sqrt()).unwrap();
    let psa_obs = [1.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0]
        .iter()
        .map(|&t| PsaObs { t, y: (log_x(sp, t) + noise.sample(&mut rng)).exp() })
        .collect();
    let pet_obs = [26.0, 30.0].iter().map(|&t| PetObs { t, z: rng.random::<bool>() }).collect();
    PatientRecord { id: id.into(), cov_mu: vec![1.0], cov_gamma: vec![1.0], cov_beta: vec![1.0], psa_obs, pet_obs }
}

/// Small cohort drawn from [`globals`].
pub fn cohort(m: usize, seed: u64) -> Vec<PatientRecord<f64>> {
    let g = globals();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|i| {
            let n01 = Normal::new(0.0, 1.0).unwrap();
            let sp = SubjectParams {
                lambda: n01.sample(&mut rng),
                mu: (g.alpha_mu[0] + g.omega_mu2.sqrt() * n01.sample(&mut rng)).exp(),
                gamma: (g.alpha_gamma[0] + g.omega_gamma2.sqrt() * n01.sample(&mut rng)).exp(),
                a: g.psi_a + n01.sample(&mut rng),
                tau: rng.random_range(3.0..12.0),
                sigma2: rng.random_range(0.1..0.4),
            };
            patient(&format!("p{i:03}"), &sp, seed * 1000 + i as u64)
        })
        .collect()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Batch-means standard error of the mean of an autocorrelated series.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    (mean_var(&means).1 / means.len() as f64).sqrt()
}
