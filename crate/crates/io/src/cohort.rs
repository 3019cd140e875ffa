//! Versioned JSON cohort documents.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use psma_core::{GlobalParams, PatientRecord, PetObs, PsaObs, SubjectParams, Truth, MIN_PSA_OBS};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fs;
use crate::model::ModelConfig;

pub const COHORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsaPoint {
    /// Months since surgery.
    pub t: f64,
    /// ng/mL.
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PetPoint {
    pub t: f64,
    /// Positive exam.
    pub z: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientEntry {
    pub id: String,
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
    pub psa: Vec<PsaPoint>,
    #[serde(default)]
    pub pet: Vec<PetPoint>,
}

/// Parameters a cohort was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Layout the global vectors refer to.
    pub model: ModelConfig,
    pub globals: GlobalParams<f64>,
    pub subjects: BTreeMap<String, SubjectParams<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFile {
    pub schema_version: u32,
    pub patients: Vec<PatientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSection>,
}

fn increasing(ts: impl Iterator<Item = f64>) -> std::result::Result<(), (usize, &'static str)> {
    let mut prev = 0.0;
    for (j, t) in ts.enumerate() {
        if !t.is_finite() || t <= 0.0 {
            return Err((j, "time must be positive and finite"));
        }
        if t <= prev {
            return Err((j, "times must be strictly increasing"));
        }
        prev = t;
    }
    Ok(())
}

impl CohortFile {
    pub fn new(patients: Vec<PatientEntry>) -> Self {
        Self { schema_version: COHORT_SCHEMA_VERSION, patients, truth: None }
    }

    /// Parses and validates.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(s)
            .map_err(|e| IoError::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| IoError::schema(path.display().to_string(), e.to_string()))?;
        Self::from_json_str(&text).map_err(|e| match e {
            IoError::Schema { location, message } => {
                IoError::schema(format!("{}: {location}", path.display()), message)
            }
            e => e,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cohort serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write_atomic(path, self.to_json_string().as_bytes())
    }

    /// Checks every record invariant, reporting the first violation with
    /// its location.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != COHORT_SCHEMA_VERSION {
            return Err(IoError::schema(
                "schema_version",
                format!("unsupported version {}, expected {COHORT_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let mut seen = HashSet::new();
        for (i, p) in self.patients.iter().enumerate() {
            let at = |field: String| format!("patients[{i}]{field}");
            if p.id.is_empty() {
                return Err(IoError::schema(at(".id".into()), "empty id"));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(IoError::schema(at(".id".into()), format!("duplicate id {:?}", p.id)));
            }
            if p.psa.len() < MIN_PSA_OBS {
                return Err(IoError::schema(
                    at(".psa".into()),
                    format!("needs at least {MIN_PSA_OBS} PSA observations, has {}", p.psa.len()),
                ));
            }
            increasing(p.psa.iter().map(|o| o.t)).map_err(|(j, m)| IoError::schema(at(format!(".psa[{j}].t")), m))?;
            if let Some(j) = p.psa.iter().position(|o| !(o.y > 0.0 && o.y.is_finite())) {
                return Err(IoError::schema(at(format!(".psa[{j}].y")), "PSA must be positive and finite"));
            }
            increasing(p.pet.iter().map(|o| o.t)).map_err(|(j, m)| IoError::schema(at(format!(".pet[{j}].t")), m))?;
            if let Some((k, _)) = p.covariates.iter().find(|(_, v)| !v.is_finite()) {
                return Err(IoError::schema(at(format!(".covariates.{k}")), "covariate must be finite"));
            }
        }
        if let Some(truth) = &self.truth {
            for id in truth.subjects.keys() {
                if !seen.contains(id.as_str()) {
                    return Err(IoError::schema(format!("truth.subjects.{id}"), "no patient with this id"));
                }
            }
            for (id, sp) in &truth.subjects {
                sp.validate().map_err(|e| IoError::schema(format!("truth.subjects.{id}"), e.to_string()))?;
            }
            truth.globals.validate().map_err(|e| IoError::schema("truth.globals", e.to_string()))?;
        }
        Ok(())
    }

    pub fn patient(&self, id: &str) -> Option<&PatientEntry> {
        self.patients.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.patients.iter().map(|p| p.id.clone()).collect()
    }

    /// Model-ready records under `model`.
    pub fn records(&self, model: &ModelConfig) -> Result<Vec<PatientRecord<f64>>> {
        model.validate()?;
        self.patients.iter().enumerate().map(|(i, p)| p.record(model).map_err(|e| relocate(e, i))).collect()
    }

    /// Truth in the order of `ids`, if every id has one.
    pub fn truth_for(&self, ids: &[String]) -> Result<Option<Truth<f64>>> {
        let Some(t) = &self.truth else { return Ok(None) };
        let subjects = ids
            .iter()
            .map(|id| t.subjects.get(id).copied().ok_or_else(|| IoError::schema(format!("truth.subjects.{id}"), "missing")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(Truth { subjects, globals: t.globals.clone() }))
    }
}

fn relocate(e: IoError, i: usize) -> IoError {
    match e {
        IoError::Schema { location, message } => IoError::schema(format!("patients[{i}]{location}"), message),
        e => e,
    }
}

impl PatientEntry {
    fn row(&self, names: &[String], intercept: bool) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(names.len() + 1);
        if intercept {
            out.push(1.0);
        }
        for n in names {
            let v = self
                .covariates
                .get(n)
                .ok_or_else(|| IoError::schema(format!(".covariates.{n}"), "covariate required by the model is missing"))?;
            out.push(*v);
        }
        Ok(out)
    }

    pub fn record(&self, model: &ModelConfig) -> Result<PatientRecord<f64>> {
        let rec = PatientRecord {
            id: self.id.clone(),
            cov_mu: self.row(&model.mu, model.intercept)?,
            cov_gamma: self.row(&model.gamma, model.intercept)?,
            cov_beta: self.row(&model.beta, model.intercept)?,
            psa_obs: self.psa.iter().map(|o| PsaObs { t: o.t, y: o.y }).collect(),
            pet_obs: self.pet.iter().map(|o| PetObs { t: o.t, z: o.z }).collect(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn from_record(rec: &PatientRecord<f64>, covariates: BTreeMap<String, f64>) -> Self {
        Self {
            id: rec.id.clone(),
            covariates,
            psa: rec.psa_obs.iter().map(|o| PsaPoint { t: o.t, y: o.y }).collect(),
            pet: rec.pet_obs.iter().map(|o| PetPoint { t: o.t, z: o.z }).collect(),
        }
    }
}
