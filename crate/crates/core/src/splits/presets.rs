//! Named split protocols for the common misinformation benchmarks.
//!
//! The registry ships as `presets/presets.json`. A replacement file can be
//! supplied at run time (see [`load`]); the seed is always provided by the
//! caller, never stored in a preset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SplitError, SplitSpec};

const BUILTIN: &str = include_str!("../../presets/presets.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub spec: SplitSpec,
}

impl Preset {
    pub fn spec_with_seed(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            seed,
            ..self.spec.clone()
        }
    }
}

pub fn builtin() -> Vec<Preset> {
    serde_json::from_str(BUILTIN).expect("bundled presets parse")
}

pub fn load(path: &Path) -> Result<Vec<Preset>, SplitError> {
    let text = std::fs::read_to_string(path).map_err(|e| SplitError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SplitError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn find<'a>(presets: &'a [Preset], name: &str) -> Result<&'a Preset, SplitError> {
    presets
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| SplitError::UnknownPreset(name.to_string()))
}
