//! Model configuration: which named covariates enter each design row, and
//! whether `λ` is an individual parameter or a random effect.

use std::path::Path;

use psma_core::LambdaMode;
use psma_sampler::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fs;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub lambda: LambdaMode,
    /// Prepend a constant 1 to every design row.
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub mu: Vec<String>,
    #[serde(default)]
    pub gamma: Vec<String>,
    #[serde(default)]
    pub beta: Vec<String>,
}

fn yes() -> bool {
    true
}

fn names(prefix: &str, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    range.map(|k| format!("{prefix}{k}")).collect()
}

impl Default for ModelConfig {
    /// The simulation-study layout: growth rows `(1, c1..c5)`, logistic row
    /// `(1, c6..c9, age_std)`, individual `λ`.
    fn default() -> Self {
        let mut beta = names("c", 6..=9);
        beta.push("age_std".into());
        Self { lambda: LambdaMode::Individual, intercept: true, mu: names("c", 1..=5), gamma: names("c", 1..=5), beta }
    }
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| IoError::schema("model", e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| IoError::schema(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            IoError::Schema { message, .. } => IoError::schema(path.display().to_string(), message),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn spec(&self) -> ModelSpec {
        let extra = usize::from(self.intercept);
        ModelSpec {
            lambda_mode: self.lambda,
            p_mu: self.mu.len() + extra,
            p_gamma: self.gamma.len() + extra,
            p_beta: self.beta.len() + extra,
        }
    }

    /// Column labels of the three design rows.
    pub fn row_labels(&self) -> [Vec<String>; 3] {
        [&self.mu, &self.gamma, &self.beta].map(|names| {
            let mut out = Vec::with_capacity(names.len() + 1);
            if self.intercept {
                out.push("intercept".to_string());
            }
            out.extend(names.iter().cloned());
            out
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (row, names) in [("mu", &self.mu), ("gamma", &self.gamma), ("beta", &self.beta)] {
            if !self.intercept && names.is_empty() {
                return Err(IoError::schema(format!("model.{row}"), "design row is empty"));
            }
            for (i, n) in names.iter().enumerate() {
                if names[..i].contains(n) {
                    return Err(IoError::schema(format!("model.{row}[{i}]"), format!("covariate {n:?} listed twice")));
                }
                if n == "intercept" {
                    return Err(IoError::schema(format!("model.{row}[{i}]"), "use `intercept = true` instead"));
                }
            }
        }
        Ok(())
    }
}
