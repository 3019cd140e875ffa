use psma_core::decision::{
    assurance, assurance_count, assurance_curve, credible_interval, optimal_time, optimal_time_from,
    pi_tau_samples, waic_from_pointwise, ObsKind, PointwiseRow,
};
use psma_core::{
    log_psa_trajectory, positivity_prob, DecisionConfig, GlobalParams, ModelError, PatientDraw, PatientRecord,
    PsaObs, SubjectParams,
};

fn subject(tau: f64) -> SubjectParams<f64> {
    SubjectParams { lambda: 0.0, mu: 0.1, gamma: 0.3, a: 2.0, tau, sigma2: 0.1 }
}

/// Draw with positivity pinned to 1 (huge intercept).
fn sure_draw(tau: f64) -> PatientDraw<f64> {
    PatientDraw { subject: subject(tau), beta0: 50.0, beta1: 0.0, beta2: 0.0 }
}

fn patient(last_psa: f64) -> PatientRecord<f64> {
    PatientRecord {
        id: "p1".into(),
        cov_mu: vec![1.0],
        cov_gamma: vec![1.0],
        cov_beta: vec![1.0],
        psa_obs: (1..=4).map(|k| PsaObs { t: last_psa * k as f64 / 4.0, y: 1.0 }).collect(),
        pet_obs: vec![],
    }
}

// Independent reconstruction in the x^β₁ e^{β₀+β₂t} / (1 + …) form, with the
// linear branch taken for t < τ.
fn oracle_pi(d: &PatientDraw<f64>, t: f64) -> f64 {
    let s = &d.subject;
    let lin_tau = s.lambda - s.mu * s.tau;
    let log_x = if t < s.tau {
        s.lambda - s.mu * t
    } else {
        lin_tau * (-s.gamma * (t - s.tau)).exp() + s.a * (1.0 - (-s.gamma * (t - s.tau)).exp())
    };
    let num = log_x.exp().powf(d.beta1) * (d.beta0 + d.beta2 * t).exp();
    num / (1.0 + num)
}

fn oracle_count(draws: &[PatientDraw<f64>], t: f64, pi_star: f64) -> usize {
    let mut n = 0;
    for d in draws {
        if oracle_pi(d, t) > pi_star && d.subject.tau < t {
            n += 1;
        }
    }
    n
}

#[test]
fn single_draw_passthrough() {
    let g = GlobalParams {
        alpha_mu: vec![0.0],
        alpha_gamma: vec![0.0],
        alpha_beta: vec![0.3],
        beta1: 1.5,
        beta2: 0.05,
        psi_a: 0.0,
        omega_mu2: 1.0,
        omega_gamma2: 1.0,
        omega_a2: 1.0,
        ig_a: 3.0,
        ig_b: 1.0,
        lambda: None,
    };
    let sp = subject(6.0);
    let d = PatientDraw { subject: sp, beta0: g.beta0(&[1.0]), beta1: g.beta1, beta2: g.beta2 };
    let t = 9.0;
    let out = pi_tau_samples(&[d], t);
    let direct = positivity_prob(&g, &[1.0], log_psa_trajectory(&sp, t), t);
    assert_eq!(out, vec![(direct, 6.0)]);

    let same = pi_tau_samples(&[d; 5], t);
    assert!(same.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn pi_tau_matches_independent_reconstruction() {
    // deterministic pseudo-random draws
    let mut state = 0x1234_5678_u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let draws: Vec<_> = (0..100)
        .map(|_| PatientDraw {
            subject: SubjectParams {
                lambda: next() * 2.0 - 1.0,
                mu: 0.05 + next(),
                gamma: 0.05 + next(),
                a: 4.0 * next(),
                tau: 1.0 + 20.0 * next(),
                sigma2: 0.1,
            },
            beta0: next() * 4.0 - 2.0,
            beta1: 3.0 * next(),
            beta2: next() - 0.5,
        })
        .collect();
    for &t in &[0.5, 7.3, 18.0, 33.0] {
        for (d, (pi, tau)) in draws.iter().zip(pi_tau_samples(&draws, t)) {
            assert!((pi - oracle_pi(d, t)).abs() < 1e-12, "t={t}: {pi} vs {}", oracle_pi(d, t));
            assert_eq!(tau, d.subject.tau);
        }
    }
}

#[test]
fn assurance_counts() {
    let all = vec![sure_draw(1.0); 7];
    assert_eq!(assurance(&all, 5.0, 0.5), 1.0);

    let mut four = vec![sure_draw(1.0); 3];
    four.push(sure_draw(10.0));
    assert_eq!(assurance(&four, 5.0, 0.5), 0.75);

    assert_eq!(assurance(&four, 0.5, 0.5), 0.0);
    // strict inequality on τ
    assert_eq!(assurance(&[sure_draw(5.0)], 5.0, 0.5), 0.0);
}

#[test]
fn degenerate_draws_give_first_grid_point() {
    let draws = vec![sure_draw(1e-9); 10];
    let p = patient(25.0);
    let res = optimal_time(&draws, &p, &DecisionConfig::new(0.9)).unwrap();
    assert_eq!(res.t_star, Some(25.0));
    assert_eq!(res.assurance_at_t_star, Some(1.0));
    assert_eq!(res.earliest, 25.0);
}

#[test]
fn crafted_crossing_between_30_and_31() {
    let mut draws = vec![sure_draw(10.0); 94];
    draws.push(sure_draw(30.5));
    draws.extend(vec![sure_draw(100.0); 5]);
    let cfg = DecisionConfig { pi_star: 0.5, rho: 0.95, grid_step: 1.0, horizon: 20.0 };
    let res = optimal_time_from(&draws, 25.0, &cfg).unwrap();
    assert_eq!(res.t_star, Some(31.0));
    for (&t, &c) in res.curve.grid.iter().zip(&res.curve.counts) {
        assert_eq!(c, oracle_count(&draws, t, 0.5));
    }
}

#[test]
fn rho_monotonicity_and_missing_t_star() {
    let draws: Vec<_> = (0..50).map(|k| sure_draw(20.0 + k as f64)).collect();
    let at = |rho: f64| {
        let cfg = DecisionConfig { pi_star: 0.5, rho, grid_step: 0.5, horizon: 40.0 };
        optimal_time_from(&draws, 20.0, &cfg).unwrap().t_star.unwrap_or(f64::INFINITY)
    };
    let rhos = [0.1, 0.3, 0.5, 0.9, 0.95, 0.99];
    for w in rhos.windows(2) {
        assert!(at(w[0]) <= at(w[1]));
    }
    let cfg = DecisionConfig { pi_star: 0.5, rho: 0.99, grid_step: 0.5, horizon: 5.0 };
    assert_eq!(optimal_time_from(&draws, 20.0, &cfg).unwrap().t_star, None);
}

#[test]
fn assurance_nonincreasing_in_pi_star() {
    let draws: Vec<_> = (0..40)
        .map(|k| PatientDraw { subject: subject(2.0), beta0: -3.0 + 0.15 * k as f64, beta1: 1.0, beta2: 0.0 })
        .collect();
    let grid: Vec<f64> = (0..20).map(|k| 3.0 + k as f64).collect();
    let lo = assurance_curve(&draws, &grid, 0.3);
    let hi = assurance_curve(&draws, &grid, 0.7);
    for (a, b) in lo.assurance.iter().zip(&hi.assurance) {
        assert!(b <= a);
        assert!((0.0..=1.0).contains(a));
    }
    assert_eq!(assurance_count(&draws, 10.0, 0.3), lo.counts[7]);
}

#[test]
fn empty_history_is_an_error() {
    let mut p = patient(10.0);
    p.psa_obs.clear();
    let err = optimal_time(&[sure_draw(1.0)], &p, &DecisionConfig::new(0.5)).unwrap_err();
    assert!(matches!(err, ModelError::EmptyHistory(_)));
}

#[test]
fn bad_config_rejected() {
    let bad = DecisionConfig { pi_star: 1.0, rho: 0.95, grid_step: 0.5, horizon: 10.0 };
    assert!(optimal_time_from(&[sure_draw(1.0)], 1.0, &bad).is_err());
    let bad = DecisionConfig { pi_star: 0.5, rho: 0.95, grid_step: 0.0, horizon: 10.0 };
    assert!(optimal_time_from(&[sure_draw(1.0)], 1.0, &bad).is_err());
}

#[test]
fn credible_interval_examples() {
    assert_eq!(credible_interval(&[2.5; 10], 0.95).unwrap(), (2.5, 2.5));
    let draws: Vec<f64> = (1..=100).map(f64::from).collect();
    let (lo, hi) = credible_interval(&draws, 0.95).unwrap();
    assert!((lo - 3.475_f64).abs() < 1e-12 && (hi - 97.525_f64).abs() < 1e-12);
    assert_eq!(credible_interval(&draws, 1.0).unwrap(), (1.0, 100.0));
    assert!(credible_interval(&[1.0], 0.9).is_err());
}

#[test]
fn waic_hand_fixture() {
    let rows = vec![
        PointwiseRow { patient: "a".into(), kind: ObsKind::Psa, index: 0, loglik: vec![-1.0, -2.0] },
        PointwiseRow { patient: "a".into(), kind: ObsKind::Pet, index: 0, loglik: vec![-0.5, -0.7] },
    ];
    let w = waic_from_pointwise(&rows).unwrap();
    assert!((w.lppd - -1.9748938042200757_f64).abs() < 1e-12);
    assert!((w.p_waic - 0.52_f64).abs() < 1e-12);
    assert!((w.waic - 4.989787608440151_f64).abs() < 1e-12);
    assert!((w.waic - (-2.0 * w.lppd + 2.0 * w.p_waic)).abs() < 1e-12);
}

#[test]
fn waic_constant_loglik() {
    let rows = vec![
        PointwiseRow { patient: "a".into(), kind: ObsKind::Psa, index: 0, loglik: vec![-1.25; 5] },
        PointwiseRow { patient: "a".into(), kind: ObsKind::Psa, index: 1, loglik: vec![-0.5; 5] },
    ];
    let w = waic_from_pointwise(&rows).unwrap();
    assert_eq!(w.p_waic, 0.0);
    assert!((w.waic - 3.5_f64).abs() < 1e-12);
}

#[test]
fn waic_reports_offending_observation() {
    let rows = vec![PointwiseRow {
        patient: "b7".into(),
        kind: ObsKind::Pet,
        index: 2,
        loglik: vec![-1.0, f64::NEG_INFINITY],
    }];
    match waic_from_pointwise(&rows).unwrap_err() {
        ModelError::NonFinite { patient, kind, index } => {
            assert_eq!((patient.as_str(), kind, index), ("b7", "pet", 2));
        }
        e => panic!("unexpected {e}"),
    }
}
