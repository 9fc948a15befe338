//! Binned rate spectra of surviving candidates.

use super::EventCandidate;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Analysis threshold, keV/c.
pub const ANALYSIS_THRESHOLD: f64 = 150.0;

/// 150 to 1000 keV/c in 25 keV/c steps.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=34)
        .map(|i| ANALYSIS_THRESHOLD + 25.0 * i as f64)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub dataset_id: String,
    pub gas: String,
    /// mbar.
    pub nominal_pressure: f64,
    /// Exposure before cuts, s.
    pub raw_time: f64,
    /// Free-form cut summary.
    #[serde(default)]
    pub cuts: BTreeMap<String, f64>,
    /// Spread of the in-situ calibration pulses, keV/c.
    #[serde(default)]
    pub calibration_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSpectrum {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// s.
    pub live_time: f64,
    pub meta: SpectrumMeta,
}

impl BinnedSpectrum {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Differential rate per bin, s^-1 (keV/c)^-1.
    pub fn rates(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(&c, e)| c as f64 / (self.live_time * (e[1] - e[0])))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_edges(&self.bin_edges)?;
        if self.counts.len() + 1 != self.bin_edges.len() {
            return Err(Error::Format("counts and edges disagree in length".into()));
        }
        if !(self.live_time >= 0.0) {
            return Err(Error::Format("negative live time".into()));
        }
        if self.meta.raw_time > 0.0 && self.live_time > self.meta.raw_time * (1.0 + 1e-12) {
            return Err(Error::Format("live time exceeds raw exposure".into()));
        }
        Ok(())
    }

    /// Writes `<stem>.csv` (lo_edge, hi_edge, counts) and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("csv"))?);
        writeln!(w, "lo_edge,hi_edge,counts")?;
        for (c, e) in self.counts.iter().zip(self.bin_edges.windows(2)) {
            writeln!(w, "{},{},{}", e[0], e[1], c)?;
        }
        w.flush()?;
        let meta = serde_json::json!({
            "schema_version": crate::schema::VERSION,
            "live_time": self.live_time,
            "meta": self.meta,
        });
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(stem.with_extension("json"))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        crate::schema::check(
            v.get("schema_version")
                .and_then(|s| s.as_str())
                .ok_or_else(|| Error::Format("spectrum metadata lacks schema_version".into()))?,
        )?;
        let live_time = v
            .get("live_time")
            .and_then(|x| x.as_f64())
            .ok_or_else(|| Error::Format("spectrum metadata lacks live_time".into()))?;
        let meta: SpectrumMeta =
            serde_json::from_value(v.get("meta").cloned().unwrap_or_default())?;
        let csv = std::fs::read_to_string(stem.with_extension("csv"))?;
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for line in csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("bad spectrum row `{line}`")));
            }
            let lo: f64 = cols[0]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{e}")))?;
            let hi: f64 = cols[1]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{e}")))?;
            if edges.is_empty() {
                edges.push(lo);
            } else if *edges.last().unwrap() != lo {
                return Err(Error::Format("spectrum bins are not contiguous".into()));
            }
            edges.push(hi);
            counts.push(
                cols[2]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("{e}")))?,
            );
        }
        let s = BinnedSpectrum {
            bin_edges: edges,
            counts,
            live_time,
            meta,
        };
        s.validate()?;
        Ok(s)
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Domain("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "bin edges must be finite and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Histogram of |amplitude| for candidates without any flag.
pub fn bin_events(
    candidates: &[EventCandidate],
    edges: &[f64],
    live_time: f64,
) -> Result<BinnedSpectrum> {
    check_edges(edges)?;
    let mut counts = vec![0u64; edges.len() - 1];
    for c in candidates.iter().filter(|c| !c.flags.any()) {
        let a = c.abs_amplitude;
        if a < edges[0] || a >= edges[edges.len() - 1] {
            continue;
        }
        let b = edges.partition_point(|&e| e <= a) - 1;
        counts[b] += 1;
    }
    Ok(BinnedSpectrum {
        bin_edges: edges.to_vec(),
        counts,
        live_time,
        meta: SpectrumMeta::default(),
    })
}
