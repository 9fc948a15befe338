//! JSON artifacts shared between pipeline stages.

use crate::dynsim::{NoiseConfig, OscillatorConfig};
use crate::error::{Error, Result};
use crate::recon::Template;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Reads a JSON file whose top level carries a `schema_version` field.
pub fn read_versioned_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let version = v
        .get("schema_version")
        .and_then(|s| s.as_str())
        .ok_or_else(|| Error::Format(format!("{} lacks schema_version", path.display())))?;
    crate::schema::check(version)?;
    Ok(serde_json::from_value(v)?)
}

/// Detector state fixed before any dataset is taken: noise level, template
/// and gof threshold from the dedicated calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub schema_version: String,
    pub oscillator: OscillatorConfig,
    pub noise: NoiseConfig,
    pub template: Template,
    pub gof_threshold: f64,
    /// Mean predicted filter noise, keV/c.
    pub filter_sigma: f64,
    /// Spread of the calibration pulse readings, keV/c.
    pub pulse_sigma: f64,
    /// Mean calibration pulse reading, keV/c.
    pub pulse_mean: f64,
}

impl CalibrationArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned_json(path)
    }
}
