use proptest::prelude::*;
use psma_core::{
    joint_loglik, log_psa_trajectory, positivity_prob, GlobalParams, PatientRecord, PetObs, PsaObs, SubjectParams,
    TauSupport,
};

fn subject() -> impl Strategy<Value = SubjectParams<f64>> {
    (-5.0..5.0f64, 0.01..5.0f64, 0.01..3.0f64, -10.0..10.0f64, 0.5..30.0f64, 0.01..2.0f64).prop_map(
        |(lambda, mu, gamma, a, tau, sigma2)| SubjectParams { lambda, mu, gamma, a, tau, sigma2 },
    )
}

fn globals(beta0: f64, beta1: f64, beta2: f64) -> GlobalParams<f64> {
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

proptest! {
    #[test]
    fn continuous_at_change_point(sp in subject()) {
        let eps = 1e-8;
        let left = log_psa_trajectory(&sp, sp.tau - eps);
        let right = log_psa_trajectory(&sp, sp.tau + eps);
        // allow for the one-sided slopes across the 2ε window
        let at_tau = sp.lambda - sp.mu * sp.tau;
        let slope = sp.mu.max(sp.gamma * (sp.a - at_tau).abs());
        prop_assert!((left - right).abs() < 1e-6 + 2.0 * eps * slope);
    }

    #[test]
    fn monotone_phases(sp in subject(), u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let (t1, t2) = (sp.tau * u.min(v), sp.tau * u.max(v));
        if t2 > t1 {
            prop_assert!(log_psa_trajectory(&sp, t2) < log_psa_trajectory(&sp, t1));
        }
        let at_tau = sp.lambda - sp.mu * sp.tau;
        let s1 = sp.tau + 0.5 + 5.0 * u.min(v);
        let s2 = sp.tau + 0.5 + 5.0 * u.max(v) + 0.1;
        let (x1, x2) = (log_psa_trajectory(&sp, s1), log_psa_trajectory(&sp, s2));
        if sp.a > at_tau {
            prop_assert!(x2 >= x1);
        } else {
            prop_assert!(x2 <= x1);
        }
    }

    #[test]
    fn approaches_asymptote(sp in subject()) {
        let at_tau = sp.lambda - sp.mu * sp.tau;
        let x = log_psa_trajectory(&sp, sp.tau + 50.0 / sp.gamma);
        prop_assert!((x - sp.a).abs() < (sp.a - at_tau).abs() * (-50.0f64).exp() + 1e-12);
    }

    #[test]
    fn link_increasing_and_vanishing(b0 in -5.0..5.0f64, b1 in 0.1..5.0f64, b2 in -1.0..1.0f64,
                                     lx in -10.0..10.0f64, d in 0.01..5.0f64, t in 0.0..40.0f64) {
        let g = globals(b0, b1, b2);
        prop_assert!(positivity_prob(&g, &[1.0], lx + d, t) > positivity_prob(&g, &[1.0], lx, t)
            || positivity_prob(&g, &[1.0], lx, t) == 1.0);
        let cutoff = (-20.0 - b0 - b2 * t) / b1;
        prop_assert!(positivity_prob(&g, &[1.0], cutoff - d, t) < 1e-6);
    }

    #[test]
    fn tau_cdf_properties(t1 in 0.1..5.0f64, g1 in 0.1..5.0f64, g2 in 0.1..20.0f64, g3 in 0.1..5.0f64,
                          xs in prop::collection::vec(0.0..40.0f64, 2..20)) {
        let s = TauSupport::new(t1, t1 + g1, t1 + g1 + g2, t1 + g1 + g2 + g3).unwrap();
        let mut xs = xs;
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in xs.windows(2) {
            prop_assert!(s.cdf(w[0]) <= s.cdf(w[1]));
        }
        prop_assert_eq!(s.cdf(s.t_first - 1e-9), 0.0);
        prop_assert_eq!(s.cdf(s.t_last), 1.0);
        let total = 2.0 * s.logmass(s.t_first).exp() + s.logmass(s.ramp_mid()).exp() * s.ramp_width();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((s.cdf(s.ramp_mid()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loglik_additive_over_split(sp in subject(), split in 0usize..6, pet_split in 0usize..4) {
        let g = globals(0.5, 1.2, 0.05);
        let psa: Vec<_> = (1..=6).map(|k| PsaObs { t: 2.0 * k as f64, y: 0.3 * k as f64 }).collect();
        let pet: Vec<_> = (0..4).map(|k| PetObs { t: 15.0 + k as f64, z: k % 2 == 0 }).collect();
        let mk = |psa: &[PsaObs<f64>], pet: &[PetObs<f64>]| PatientRecord {
            id: "p".into(),
            cov_mu: vec![1.0],
            cov_gamma: vec![1.0],
            cov_beta: vec![1.0],
            psa_obs: psa.to_vec(),
            pet_obs: pet.to_vec(),
        };
        let whole = joint_loglik(&mk(&psa, &pet), &sp, &g);
        let parts = joint_loglik(&mk(&psa[..split], &pet[..pet_split]), &sp, &g)
            + joint_loglik(&mk(&psa[split..], &pet[pet_split..]), &sp, &g);
        prop_assert!((whole - parts).abs() < 1e-9 * (1.0 + whole.abs()));
    }
}
