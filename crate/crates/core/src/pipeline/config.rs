//! Declarative run configuration, read from TOML. Every field has a default;
//! see the README for the full reference.

use crate::error::{Error, Result};
use crate::inference::{LikelihoodForm, McmcSettings};
use crate::kinetics::GasSpecies;
use crate::recon::{default_bin_edges, ANALYSIS_THRESHOLD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Fixed readout imprecision, m/sqrt(Hz). When absent the noise is
    /// calibrated to reach `sigma_q`.
    pub readout_density: Option<f64>,
    pub calibration_pulses: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            readout_density: None,
            calibration_pulses: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// Pulses in the dedicated run that sets the template and gof threshold.
    pub pulses: usize,
    /// keV/c.
    pub amplitude: f64,
    /// s.
    pub spacing: f64,
    /// Period of in-situ pulses within each dataset, s.
    pub in_situ_period: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            pulses: 300,
            amplitude: 1040.0,
            spacing: 0.025,
            in_situ_period: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub form: LikelihoodForm,
    pub overdispersion: f64,
    pub sigma_constraint: f64,
    pub alpha_init: f64,
    /// K.
    pub surface_temperature_init: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            form: LikelihoodForm::Extended,
            overdispersion: crate::inference::DEFAULT_OVERDISPERSION,
            sigma_constraint: 0.1,
            alpha_init: 0.5,
            surface_temperature_init: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosureSection {
    pub gases: Vec<String>,
    pub trials: usize,
    /// Live time per toy dataset, s.
    pub live_time: f64,
    /// Background rate above threshold, s^-1.
    pub bg_rate: f64,
    /// keV/c.
    pub bg_mean: f64,
    pub sampler: McmcSettings,
}

impl Default for ClosureSection {
    fn default() -> Self {
        ClosureSection {
            gases: vec!["Kr".into(), "Xe".into(), "SF6".into()],
            trials: 100,
            live_time: 21.6,
            bg_rate: 3950.0,
            bg_mean: 55.0,
            sampler: McmcSettings {
                n_steps: 12_000,
                burn_in: 3000,
                ..McmcSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gas: String,
    /// Nominal partial pressures, one dataset each, mbar.
    pub pressures: Vec<f64>,
    /// Constant added to the nominal pressures to form gauge readings, mbar.
    pub gauge_offset: f64,
    pub alpha: f64,
    /// K.
    pub surface_temperature: f64,
    /// Target impulse resolution, keV/c.
    pub sigma_q: f64,
    /// Per dataset, s.
    pub duration: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// keV/c.
    pub bin_edges: Vec<f64>,
    /// keV/c.
    pub threshold: f64,
    /// Datasets above this pressure are left out of the fit, mbar.
    pub pileup_limit: f64,
    pub include_pileup: bool,
    pub write_traces: bool,
    pub write_events: bool,
    pub noise: NoiseSection,
    pub calibration: CalibrationSection,
    pub fit: FitSection,
    pub sampler: McmcSettings,
    pub closure: ClosureSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gas: "Xe".into(),
            pressures: vec![5e-8, 7.5e-8, 1e-7],
            gauge_offset: 0.0,
            alpha: 0.61,
            surface_temperature: 293.0,
            sigma_q: 60.0,
            duration: 30.0,
            seed: 1,
            out_dir: PathBuf::from("out"),
            bin_edges: default_bin_edges(),
            threshold: ANALYSIS_THRESHOLD,
            pileup_limit: 1e-7,
            include_pileup: false,
            write_traces: false,
            write_events: false,
            noise: NoiseSection::default(),
            calibration: CalibrationSection::default(),
            fit: FitSection::default(),
            sampler: McmcSettings::default(),
            closure: ClosureSection::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| bad(e.to_string()))
    }

    pub fn species(&self) -> Result<GasSpecies> {
        GasSpecies::from_name(&self.gas)
    }

    pub fn validate(&self) -> Result<()> {
        self.species()?;
        if self.pressures.is_empty() || self.pressures.iter().any(|p| !(*p > 0.0 && p.is_finite()))
        {
            return Err(bad("pressures must be a non-empty list of positive values"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(bad(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(self.surface_temperature >= 293.0) {
            return Err(bad("surface_temperature must be at least 293 K"));
        }
        if !(self.sigma_q > 0.0 && self.sigma_q <= 200.0) {
            return Err(bad("sigma_q must lie in (0, 200] keV/c"));
        }
        if !(self.duration > self.calibration.in_situ_period) {
            return Err(bad("duration must exceed the in-situ calibration period"));
        }
        if self.bin_edges.len() < 2 || self.bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad(
                "bin_edges must be strictly ascending with at least two entries",
            ));
        }
        if self.bin_edges[0] < self.threshold {
            return Err(bad("the first bin edge lies below the analysis threshold"));
        }
        if !(self.pileup_limit > 0.0) {
            return Err(bad("pileup_limit must be positive"));
        }
        if let Some(d) = self.noise.readout_density {
            if !(d > 0.0) {
                return Err(bad("noise.readout_density must be positive"));
            }
        }
        let c = &self.calibration;
        if c.pulses < 50 || !(c.amplitude > 0.0) || !(c.spacing > 0.0) || !(c.in_situ_period > 0.0)
        {
            return Err(bad(
                "calibration needs at least 50 pulses and positive amplitude, spacing and period",
            ));
        }
        for s in [&self.sampler, &self.closure.sampler] {
            if s.n_chains < 4 || s.burn_in + 4 > s.n_steps {
                return Err(bad(
                    "sampler needs at least 4 chains and steps beyond burn-in",
                ));
            }
        }
        for g in &self.closure.gases {
            GasSpecies::from_name(g)?;
        }
        if !(0.0..=1.0).contains(&self.fit.alpha_init) || !(self.fit.overdispersion >= 0.0) {
            return Err(bad(
                "fit.alpha_init must lie in [0, 1] and fit.overdispersion be non-negative",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    /// Independent seed for a named stage and index, derived from `seed`.
    pub fn derive_seed(&self, stage: &str, index: u64) -> u64 {
        derive_seed(self.seed, stage, index)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn derive_seed(seed: u64, stage: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Accommodation coefficients used as closure truth per gas.
pub fn nominal_alpha(gas: &str) -> Result<f64> {
    match GasSpecies::from_name(gas)?.name.as_str() {
        "Kr" => Ok(0.55),
        "Xe" => Ok(0.61),
        "SF6" => Ok(0.82),
        other => Err(bad(format!("no nominal accommodation for {other}"))),
    }
}
