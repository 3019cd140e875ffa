//! Binary sample store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0       8    magic "PSMASMPL"
//! 8       4    format version (u32)
//! 12      4    reserved, zero
//! 16      8    header length H (u64)
//! 24      H    header, UTF-8 JSON
//! 24+H    8    draw count B (u64)
//! 32+H    8    column count C (u64)
//! 40+H    8BC  draws, row-major f64
//! end-32  32   SHA-256 of every preceding byte
//! ```

use std::path::Path;

use psma_core::{ChainMeta, Draw, GlobalParams, PosteriorSamples, SubjectParams};
use psma_sampler::{AcceptanceRate, Sampler};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IoError, Result};
use crate::fs;
use crate::model::ModelConfig;

pub const MAGIC: &[u8; 8] = b"PSMASMPL";
pub const STORE_VERSION: u32 = 1;
pub const SUBJECT_FIELDS: [&str; 6] = ["lambda", "mu", "gamma", "a", "tau", "sigma2"];
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub meta: ChainMeta,
    pub model: ModelConfig,
    pub patient_ids: Vec<String>,
    pub subject_fields: Vec<String>,
    pub global_names: Vec<String>,
    /// Frozen per-patient step sizes `(λ, log μ, log γ, a, log σ², τ ramp)`.
    #[serde(default)]
    pub step_sizes: Vec<[f64; 6]>,
    #[serde(default)]
    pub acceptance: Vec<AcceptanceRate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    pub header: StoreHeader,
    pub samples: PosteriorSamples<f64>,
}

impl StoreHeader {
    pub fn new(meta: ChainMeta, model: ModelConfig, patient_ids: Vec<String>) -> Self {
        let spec = model.spec();
        let template = GlobalParams::<f64>::from_values(
            spec.p_mu,
            spec.p_gamma,
            spec.p_beta,
            spec.lambda_mode,
            &vec![1.0; GlobalParams::<f64>::value_count(spec.p_mu, spec.p_gamma, spec.p_beta, spec.lambda_mode)],
        )
        .expect("count matches layout");
        Self {
            meta,
            model,
            patient_ids,
            subject_fields: SUBJECT_FIELDS.iter().map(|s| s.to_string()).collect(),
            global_names: template.named_values().into_iter().map(|(n, _)| n).collect(),
            step_sizes: Vec::new(),
            acceptance: Vec::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.patient_ids.len() * SUBJECT_FIELDS.len() + self.global_names.len()
    }

    /// Column labels, e.g. `p001.tau` or `alpha_mu[2]`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.columns());
        for id in &self.patient_ids {
            out.extend(SUBJECT_FIELDS.iter().map(|f| format!("{id}.{f}")));
        }
        out.extend(self.global_names.iter().cloned());
        out
    }
}

fn subject_values(sp: &SubjectParams<f64>) -> [f64; 6] {
    [sp.lambda, sp.mu, sp.gamma, sp.a, sp.tau, sp.sigma2]
}

fn subject_from(v: &[f64]) -> SubjectParams<f64> {
    SubjectParams { lambda: v[0], mu: v[1], gamma: v[2], a: v[3], tau: v[4], sigma2: v[5] }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IoError::Format("sample store is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl SampleStore {
    /// Packages a finished chain with its frozen step sizes and acceptance
    /// summary.
    pub fn from_sampler(sampler: Sampler, model: ModelConfig) -> Result<Self> {
        if !sampler.is_done() {
            return Err(IoError::Format("chain has not finished".into()));
        }
        if *sampler.spec() != model.spec() {
            return Err(IoError::Format("model configuration does not match the chain layout".into()));
        }
        let mut header = StoreHeader::new(sampler.config().meta(), model, Vec::new());
        header.step_sizes = sampler.subject_steps();
        header.acceptance = sampler.acceptance();
        let samples = sampler.into_samples();
        header.patient_ids = samples.patient_ids.clone();
        Self::new(header, samples)
    }

    pub fn new(header: StoreHeader, samples: PosteriorSamples<f64>) -> Result<Self> {
        let store = Self { header, samples };
        store.check()?;
        Ok(store)
    }

    fn check(&self) -> Result<()> {
        if self.header.patient_ids != self.samples.patient_ids {
            return Err(IoError::Format("header and samples list different patients".into()));
        }
        let spec = self.header.model.spec();
        let need = GlobalParams::<f64>::value_count(spec.p_mu, spec.p_gamma, spec.p_beta, spec.lambda_mode);
        if need != self.header.global_names.len() {
            return Err(IoError::Format("global name table does not match the model".into()));
        }
        for (b, d) in self.samples.draws.iter().enumerate() {
            if d.subjects.len() != self.header.patient_ids.len() {
                return Err(IoError::Format(format!("draw {b} has the wrong number of patients")));
            }
            if d.globals.named_values().len() != need {
                return Err(IoError::Format(format!("draw {b} has the wrong global layout")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let header = serde_json::to_vec(&self.header).map_err(|e| IoError::Format(e.to_string()))?;
        let cols = self.header.columns();
        let mut out = Vec::with_capacity(40 + header.len() + 8 * cols * self.samples.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for d in &self.samples.draws {
            for sp in &d.subjects {
                for v in subject_values(sp) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            for (_, v) in d.globals.named_values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(IoError::Format("not a sample store (bad magic)".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(IoError::Checksum);
        }
        let mut c = Cursor { bytes: body, pos: MAGIC.len() };
        let version = c.u32()?;
        if version != STORE_VERSION {
            return Err(IoError::Format(format!("unsupported store version {version}")));
        }
        c.u32()?;
        let h_len = c.u64()? as usize;
        let header: StoreHeader =
            serde_json::from_slice(c.take(h_len)?).map_err(|e| IoError::schema("store header", e.to_string()))?;
        let n_draws = c.u64()? as usize;
        let cols = c.u64()? as usize;
        if cols != header.columns() {
            return Err(IoError::Format(format!("store has {cols} columns, header implies {}", header.columns())));
        }
        let expected_draws = header.meta.retained() as usize;
        if header.meta.thinning > 0 && n_draws != expected_draws {
            return Err(IoError::Format(format!("store has {n_draws} draws, header implies {expected_draws}")));
        }
        let data = c.take(n_draws.checked_mul(cols * 8).ok_or_else(|| IoError::Format("size overflow".into()))?)?;
        if c.pos != body.len() {
            return Err(IoError::Format("trailing bytes after the draw records".into()));
        }
        let spec = header.model.spec();
        let m = header.patient_ids.len();
        let draws = data
            .chunks_exact(cols * 8)
            .map(|row| {
                let vals: Vec<f64> = row.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
                let subjects = vals[..6 * m].chunks_exact(6).map(subject_from).collect();
                let globals =
                    GlobalParams::from_values(spec.p_mu, spec.p_gamma, spec.p_beta, spec.lambda_mode, &vals[6 * m..])?;
                Ok(Draw { subjects, globals })
            })
            .collect::<Result<Vec<_>>>()?;
        let samples = PosteriorSamples { meta: header.meta, patient_ids: header.patient_ids.clone(), draws };
        Ok(Self { header, samples })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?).map_err(|e| match e {
            IoError::Format(m) => IoError::Format(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn patient_index(&self, id: &str) -> Option<usize> {
        self.samples.patient_index(id)
    }

    pub fn step_sizes(&self, idx: usize) -> Option<[f64; 6]> {
        self.header.step_sizes.get(idx).copied()
    }
}
