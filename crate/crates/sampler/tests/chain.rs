//! Whole-chain behaviour: bookkeeping, reproducibility, adaptation and
//! recovery of the prior when there is no data.

mod common;

use std::ops::ControlFlow;

use common::*;
use psma_core::LambdaMode;
use psma_sampler::{run_chain, ChainConfig, ModelSpec, Sampler};
use statrs::distribution::{ContinuousCDF, Normal};

fn spec() -> ModelSpec {
    ModelSpec { lambda_mode: LambdaMode::Individual, p_mu: 1, p_gamma: 1, p_beta: 1 }
}

#[test]
fn retained_draw_count() {
    let cfg = ChainConfig::new(600, 300, 3, 1);
    let s = run_chain(cfg, &cohort(3, 1), spec()).unwrap();
    assert_eq!(s.len(), 100);
    assert_eq!(s.meta.retained(), 100);
    assert_eq!(ChainConfig::default().meta().retained(), 5000);
    s.validate().unwrap();
}

#[test]
fn same_seed_same_draws_serial_or_parallel() {
    let data = cohort(6, 2);
    let cfg = ChainConfig::new(400, 200, 2, 99);
    let a = run_chain(cfg, &data, spec()).unwrap();
    let b = run_chain(cfg, &data, spec()).unwrap();
    let c = run_chain(ChainConfig { parallel: false, ..cfg }, &data, spec()).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.draws, c.draws);
    let d = run_chain(ChainConfig { seed: 100, ..cfg }, &data, spec()).unwrap();
    assert_ne!(a.draws, d.draws);
}

#[test]
fn checkpoint_resume_is_seamless() {
    let data = cohort(4, 3);
    let cfg = ChainConfig::new(300, 100, 2, 5);
    let full = run_chain(cfg, &data, spec()).unwrap();

    let mut first = Sampler::new(cfg, &data, spec()).unwrap();
    let err = first.run(1, |s| if s.iteration() == 170 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) });
    assert!(err.is_err());
    let json = serde_json::to_string(&first.checkpoint()).unwrap();
    let mut resumed = Sampler::resume(serde_json::from_str(&json).unwrap(), &data).unwrap();
    assert_eq!(resumed.iteration(), 170);
    resumed.run(0, |_| ControlFlow::Continue(())).unwrap();
    assert_eq!(resumed.into_samples().draws, full.draws);
}

#[test]
fn adapted_acceptance_rates_sit_near_target() {
    let data = cohort(40, 4);
    let mut s = Sampler::new(ChainConfig::new(20_000, 15_000, 5, 7), &data, spec()).unwrap();
    s.run(0, |_| ControlFlow::Continue(())).unwrap();
    for r in s.acceptance().iter().filter(|r| r.adaptive) {
        let rate = r.late_burn_in.unwrap();
        assert!((rate - 0.44).abs() < 0.15, "{}: {rate}", r.name);
        let rate = r.sampling.unwrap();
        assert!((0.1..=0.7).contains(&rate), "{}: {rate}", r.name);
    }
    assert!(s.log_posterior().is_finite());
}

#[test]
fn empty_cohort_recovers_the_prior() {
    let cfg = ChainConfig::new(110_000, 10_000, 10, 12);
    let s = run_chain(cfg, &[], spec()).unwrap();
    assert_eq!(s.len(), 10_000);
    let prior = Normal::new(0.0, 10.0).unwrap();
    let ks = |mut xs: Vec<f64>| {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = prior.cdf(x);
                ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    };
    let psi: Vec<f64> = s.draws.iter().map(|d| d.globals.psi_a).collect();
    let beta1: Vec<f64> = s.draws.iter().map(|d| d.globals.beta1).collect();
    let alpha_mu: Vec<f64> = s.draws.iter().map(|d| d.globals.alpha_mu[0]).collect();
    let log_omega: Vec<f64> = s.draws.iter().map(|d| 0.5 * d.globals.omega_a2.ln()).collect();
    for (name, xs) in [("psi_a", psi), ("beta1", beta1), ("alpha_mu", alpha_mu), ("log_omega_a", log_omega)] {
        let d = ks(xs);
        assert!(d < 0.03, "{name}: KS {d}");
    }
}

#[test]
fn rejects_bad_input() {
    let mut data = cohort(2, 5);
    assert!(Sampler::new(ChainConfig::new(10, 10, 1, 0), &data, spec()).is_err());
    data[1].cov_mu.push(0.3);
    assert!(Sampler::new(ChainConfig::new(20, 10, 1, 0), &data, spec()).is_err());
    data[1].cov_mu.pop();
    data[1].psa_obs.truncate(3);
    assert!(Sampler::new(ChainConfig::new(20, 10, 1, 0), &data, spec()).is_err());
}


