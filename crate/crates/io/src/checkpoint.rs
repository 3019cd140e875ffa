//! Chain checkpoints: the sampler state as JSON, written atomically.

use std::path::Path;

use psma_sampler::ChainCheckpoint;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fs;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    checkpoint_version: u32,
    state: ChainCheckpoint,
}

pub fn write_checkpoint(path: &Path, ckpt: &ChainCheckpoint) -> Result<()> {
    let env = Envelope { checkpoint_version: CHECKPOINT_VERSION, state: ckpt.clone() };
    let bytes = serde_json::to_vec(&env).map_err(|e| IoError::Format(e.to_string()))?;
    fs::write_atomic(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<ChainCheckpoint> {
    let bytes = fs::read(path)?;
    let env: Envelope =
        serde_json::from_slice(&bytes).map_err(|e| IoError::schema(path.display().to_string(), e.to_string()))?;
    if env.checkpoint_version != CHECKPOINT_VERSION {
        return Err(IoError::Format(format!("unsupported checkpoint version {}", env.checkpoint_version)));
    }
    Ok(env.state)
}
