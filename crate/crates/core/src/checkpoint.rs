//! Versioned JSON checkpoints of the agent and optimizer state.

use crate::mlp::{AdamState, NetworkParams};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub episodes_completed: u64,
    pub params: NetworkParams,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn new(episodes_completed: u64, params: NetworkParams, adam: AdamState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            episodes_completed,
            params,
            adam,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let json = serde_json::to_string_pretty(ckpt)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(ckpt.version));
    }
    Ok(ckpt)
}

/// Standard checkpoint file name for a given episode count.
pub fn checkpoint_file_name(episodes_completed: u64) -> String {
    format!("ckpt_ep{episodes_completed}.json")
}
