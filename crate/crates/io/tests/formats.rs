use std::collections::BTreeMap;

use proptest::prelude::*;
use psma_core::{ChainMeta, Draw, GlobalParams, LambdaHyper, LambdaMode, PosteriorSamples, SubjectParams};
use psma_io::{CohortFile, IoError, ModelConfig, PatientEntry, PetPoint, PsaPoint, SampleStore, StoreHeader};

fn entry(id: &str) -> PatientEntry {
    let covariates: BTreeMap<String, f64> =
        (1..=9).map(|k| (format!("c{k}"), (k % 2) as f64)).chain([("age_std".to_string(), -0.4)]).collect();
    PatientEntry {
        id: id.into(),
        covariates,
        psa: [1.0, 4.0, 9.0, 15.0, 20.0].iter().map(|&t| PsaPoint { t, y: 0.3 * t }).collect(),
        pet: vec![PetPoint { t: 27.0, z: false }, PetPoint { t: 33.0, z: true }],
    }
}

fn schema_location(e: IoError) -> String {
    match e {
        IoError::Schema { location, .. } => location,
        other => panic!("expected a schema error, got {other}"),
    }
}

#[test]
fn cohort_builds_design_rows_from_names() {
    let cohort = CohortFile::new(vec![entry("a"), entry("b")]);
    let recs = cohort.records(&ModelConfig::default()).unwrap();
    assert_eq!(recs[0].cov_mu, vec![1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert_eq!(recs[0].cov_beta, vec![1.0, 0.0, 1.0, 0.0, 1.0, -0.4]);
    assert_eq!(recs[1].psa_obs.len(), 5);
    let spec = ModelConfig::default().spec();
    assert_eq!((spec.p_mu, spec.p_gamma, spec.p_beta), (6, 6, 6));
}

#[test]
fn schema_errors_are_located() {
    let mut c = CohortFile::new(vec![entry("a"), entry("b")]);
    c.patients[1].psa[2].t = 3.0;
    assert_eq!(schema_location(c.validate().unwrap_err()), "patients[1].psa[2].t");

    let mut c = CohortFile::new(vec![entry("a"), entry("a")]);
    assert_eq!(schema_location(c.validate().unwrap_err()), "patients[1].id");
    c.patients[1].id = "b".into();
    c.patients[0].psa[0].y = 0.0;
    assert_eq!(schema_location(c.validate().unwrap_err()), "patients[0].psa[0].y");

    let mut c = CohortFile::new(vec![entry("a")]);
    c.patients[0].covariates.remove("c7");
    assert_eq!(schema_location(c.records(&ModelConfig::default()).unwrap_err()), "patients[0].covariates.c7");

    let bad = r#"{"schema_version": 1, "patients": [{"id": "x", "psa": [], "pet": [], "extra": 1}]}"#;
    assert!(matches!(CohortFile::from_json_str(bad), Err(IoError::Schema { .. })));
    let old = r#"{"schema_version": 0, "patients": []}"#;
    assert_eq!(schema_location(CohortFile::from_json_str(old).unwrap_err()), "schema_version");
}

#[test]
fn empty_cohort_is_valid() {
    let c = CohortFile::from_json_str(r#"{"schema_version": 1, "patients": []}"#).unwrap();
    assert!(c.records(&ModelConfig::default()).unwrap().is_empty());
}

#[test]
fn model_config_toml() {
    let cfg = ModelConfig::from_toml_str(
        r#"
        lambda = "random"
        mu = ["c1", "c2"]
        gamma = []
        beta = ["noise1"]
        "#,
    )
    .unwrap();
    assert_eq!(cfg.lambda, LambdaMode::Random);
    assert!(cfg.intercept);
    let spec = cfg.spec();
    assert_eq!((spec.p_mu, spec.p_gamma, spec.p_beta), (3, 1, 2));
    assert_eq!(ModelConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    assert!(ModelConfig::from_toml_str("lambda = \"sometimes\"").is_err());
    assert!(ModelConfig::from_toml_str("mu = [\"c1\", \"c1\"]").unwrap().validate().is_err());
    assert_eq!(ModelConfig::from_toml_str("").unwrap().spec().p_mu, 1);
}

fn globals(mode: LambdaMode, x: f64) -> GlobalParams<f64> {
    GlobalParams {
        alpha_mu: vec![x; 6],
        alpha_gamma: vec![-x; 6],
        alpha_beta: vec![0.5 * x; 6],
        beta1: 4.0,
        beta2: 0.5,
        psi_a: 5.7,
        omega_mu2: 0.1,
        omega_gamma2: 0.1,
        omega_a2: 1.0,
        ig_a: 3.0,
        ig_b: 0.5,
        lambda: (mode == LambdaMode::Random).then_some(LambdaHyper { psi: x, omega2: 1.5 }),
    }
}

fn store(values: &[f64], mode: LambdaMode) -> SampleStore {
    let ids = vec!["p1".to_string(), "p2".to_string()];
    let draws: Vec<Draw<f64>> = values
        .iter()
        .map(|&x| Draw {
            subjects: vec![
                SubjectParams { lambda: x, mu: 1.0, gamma: 0.3, a: 5.0, tau: 7.5, sigma2: 0.2 },
                SubjectParams { lambda: -x, mu: 2.0, gamma: 0.4, a: 4.0, tau: 3.0, sigma2: 0.1 },
            ],
            globals: globals(mode, x),
        })
        .collect();
    let meta = ChainMeta { seed: 3, iterations: values.len() as u64, burn_in: 0, thinning: 1 };
    let model = ModelConfig { lambda: mode, ..ModelConfig::default() };
    let mut header = StoreHeader::new(meta, model, ids.clone());
    header.step_sizes = vec![[0.1; 6], [0.2; 6]];
    SampleStore::new(header, PosteriorSamples { meta, patient_ids: ids, draws }).unwrap()
}

#[test]
fn store_layout_and_corruption() {
    let s = store(&[0.25, -1.5, 3.0], LambdaMode::Individual);
    let bytes = s.to_bytes().unwrap();
    assert_eq!(&bytes[..8], b"PSMASMPL");
    let cols = s.header.columns();
    assert_eq!(cols, 2 * 6 + 18 + 8);
    assert_eq!(s.header.column_names()[4], "p1.tau");
    let h_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 24 + h_len + 16 + 8 * cols * 3 + 32);
    let first = f64::from_le_bytes(bytes[40 + h_len..48 + h_len].try_into().unwrap());
    assert_eq!(first, 0.25);

    let mut flipped = bytes.clone();
    flipped[40 + h_len + 3] ^= 1;
    assert!(matches!(SampleStore::from_bytes(&flipped), Err(IoError::Checksum)));
    assert!(SampleStore::from_bytes(&bytes[..bytes.len() - 5]).is_err());
    assert!(SampleStore::from_bytes(b"nonsense").is_err());
}

#[test]
fn store_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.psma");
    let s = store(&[1.0, 2.0], LambdaMode::Random);
    s.write(&path).unwrap();
    let back = SampleStore::read(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.step_sizes(1), Some([0.2; 6]));
    let missing = SampleStore::read(&dir.path().join("nope")).unwrap_err();
    assert!(missing.is_io());
}

proptest! {
    #[test]
    fn store_is_bit_identical(values in prop::collection::vec(-1e6f64..1e6, 1..20), random in any::<bool>()) {
        let mode = if random { LambdaMode::Random } else { LambdaMode::Individual };
        let s = store(&values, mode);
        let back = SampleStore::from_bytes(&s.to_bytes().unwrap()).unwrap();
        for (a, b) in back.samples.draws.iter().zip(&s.samples.draws) {
            prop_assert_eq!(a.subjects[0].lambda.to_bits(), b.subjects[0].lambda.to_bits());
        }
        prop_assert_eq!(back, s);
    }

    #[test]
    fn cohort_round_trips(ys in prop::collection::vec(1e-12f64..1e4, 4..9), z in any::<bool>(), age in -3.0f64..3.0) {
        let mut e = entry("q");
        e.psa = ys.iter().enumerate().map(|(j, &y)| PsaPoint { t: 0.5 + j as f64 * 1.37, y }).collect();
        e.pet[0].z = z;
        e.covariates.insert("age_std".into(), age);
        let c = CohortFile::new(vec![e]);
        let back = CohortFile::from_json_str(&c.to_json_string()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn checkpoint_round_trip() {
    use psma_sampler::{ChainConfig, Sampler};
    let cohort = CohortFile::new(vec![entry("a"), entry("b"), entry("c")]);
    let model = ModelConfig::default();
    let recs = cohort.records(&model).unwrap();
    let mut s = Sampler::new(ChainConfig::new(40, 20, 2, 1), &recs, model.spec()).unwrap();
    for _ in 0..25 {
        s.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.ckpt");
    psma_io::write_checkpoint(&path, &s.checkpoint()).unwrap();
    assert_eq!(psma_io::read_checkpoint(&path).unwrap(), s.checkpoint());
}
