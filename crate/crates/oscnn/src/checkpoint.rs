//! JSON model checkpoints: a versioned list of named tensors
//! (`name → shape → row-major values`), parameters and running statistics
//! alike.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use oscnn_core::models::{Network, StateEntry};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT: &str = "oscnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    entries: Vec<StateEntry>,
}

pub fn save_checkpoint(model: &Network, path: impl AsRef<Path>) -> Result<()> {
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        entries: model.export_state(),
    };
    let text = serde_json::to_string(&checkpoint)?;
    fs::write(path.as_ref(), text)
        .with_context(|| format!("writing checkpoint {}", path.as_ref().display()))?;
    Ok(())
}

pub fn load_checkpoint(model: &mut Network, path: impl AsRef<Path>) -> Result<()> {
    let text = fs::read_to_string(path.as_ref())
        .with_context(|| format!("reading checkpoint {}", path.as_ref().display()))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        bail!("not a model checkpoint: format {:?}", checkpoint.format);
    }
    if checkpoint.version != CHECKPOINT_VERSION {
        bail!("unsupported checkpoint version {}", checkpoint.version);
    }
    model
        .import_state(&checkpoint.entries)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}
