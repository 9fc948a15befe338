//! Averaged reconstruction response around calibration pulses.

use crate::dynsim::OscillatorConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MIN_TEMPLATE_SEGMENTS: usize = 50;

/// Expected filter output around an impulse, unit value at `reference_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub waveform: Vec<f64>,
    pub reference_index: usize,
    pub sample_rate: f64,
    /// s.
    pub span: f64,
    /// Number of averaged segments.
    pub n_pulses: usize,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    schema_version: String,
    #[serde(flatten)]
    template: Template,
}

impl Template {
    /// Value at offset `k` samples from the reference; zero outside.
    #[inline]
    pub fn at(&self, k: i64) -> f64 {
        let i = self.reference_index as i64 + k;
        if i < 0 || i as usize >= self.waveform.len() {
            0.0
        } else {
            self.waveform[i as usize]
        }
    }

    /// Samples available on each side of the reference.
    pub fn half_width(&self) -> usize {
        self.reference_index
            .min(self.waveform.len() - 1 - self.reference_index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = TemplateFile {
            schema_version: crate::schema::VERSION.into(),
            template: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let version = v
            .get("schema_version")
            .and_then(|s| s.as_str())
            .ok_or_else(|| Error::Format("template lacks schema_version".into()))?;
        crate::schema::check(version)?;
        let f: TemplateFile = serde_json::from_value(v)?;
        Ok(f.template)
    }
}

/// Pointwise mean of equally long segments centred on known pulses,
/// normalized to unit peak.
pub fn build_template(segments: &[Vec<f64>], osc: &OscillatorConfig) -> Result<Template> {
    if segments.len() < MIN_TEMPLATE_SEGMENTS {
        return Err(Error::InsufficientStatistics(format!(
            "template needs at least {MIN_TEMPLATE_SEGMENTS} segments, got {}",
            segments.len()
        )));
    }
    let len = segments[0].len();
    if segments.iter().any(|s| s.len() != len) {
        return Err(Error::Domain("template segments differ in length".into()));
    }
    let span = len as f64 / osc.sample_rate;
    if span < 10.0 * osc.period() {
        return Err(Error::Domain(format!(
            "template span {span:.3e} s is shorter than 10 oscillation periods"
        )));
    }
    let mut mean = vec![0.0; len];
    for s in segments {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    let inv = 1.0 / segments.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let (peak_index, peak) = mean
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, v)| (i, *v))
        .expect("non-empty segment");
    if peak == 0.0 {
        return Err(Error::Domain(
            "template segments are identically zero".into(),
        ));
    }
    Ok(Template {
        waveform: mean.into_iter().map(|m| m / peak).collect(),
        reference_index: peak_index,
        sample_rate: osc.sample_rate,
        span,
        n_pulses: segments.len(),
    })
}
