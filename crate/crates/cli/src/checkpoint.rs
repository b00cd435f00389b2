use std::fs;
use std::path::Path;

use modalmeta_core::meta::{ExperimentConfig, ModelState};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::format::to_json_bytes;

pub const FORMAT_VERSION: u64 = 1;

/// A trained model together with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u64,
    pub config: ExperimentConfig,
    /// Parameters, optimizer moments and iteration count.
    pub model: ModelState,
}

impl Checkpoint {
    pub fn new(config: ExperimentConfig, model: ModelState) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            model,
        }
    }

    pub fn to_bytes(&self) -> serde_json::Result<Vec<u8>> {
        to_json_bytes(self)
    }

    /// Parses a checkpoint, checking the format version before anything else.
    pub fn from_slice(path: &Path, bytes: &[u8]) -> AppResult<Checkpoint> {
        let fail = |detail: String| AppError::Checkpoint {
            path: path.into(),
            detail,
        };
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| fail(e.to_string()))?;
        match value.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            other => {
                return Err(AppError::Version {
                    path: path.into(),
                    found: other.map_or_else(|| "(missing)".into(), |v| v.to_string()),
                    expected: FORMAT_VERSION,
                })
            }
        }
        let checkpoint: Checkpoint = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
        checkpoint.config.validate().map_err(|e| fail(e.to_string()))?;
        checkpoint.model.validate().map_err(|e| fail(e.to_string()))?;
        Ok(checkpoint)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> AppResult<()> {
    let bytes = checkpoint.to_bytes().map_err(|e| AppError::Checkpoint {
        path: path.into(),
        detail: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(AppError::io(path))
}

pub fn load_checkpoint(path: &Path) -> AppResult<Checkpoint> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    Checkpoint::from_slice(path, &bytes)
}
