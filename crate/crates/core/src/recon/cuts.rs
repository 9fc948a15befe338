//! Data-quality cuts, calibration veto and live-time bookkeeping.

use super::EventCandidate;
use crate::error::{Error, Result};
use crate::numeric::{mean, quantile, std_dev};
use serde::{Deserialize, Serialize};

/// Summary of one threshold cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutStats {
    pub mean: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub flagged: usize,
    pub considered: usize,
}

impl CutStats {
    pub fn fraction(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            self.flagged as f64 / self.considered as f64
        }
    }
}

/// Flags candidates whose surrounding RMS exceeds mean + `n_sigma` sigma of
/// the RMS distribution over non-vetoed candidates.
pub fn apply_noise_cut(candidates: &mut [EventCandidate], n_sigma: f64) -> CutStats {
    let rms: Vec<f64> = candidates
        .iter()
        .filter(|c| !c.flags.calibration_veto)
        .map(|c| c.rms)
        .collect();
    if rms.len() < 2 {
        return CutStats {
            mean: rms.first().copied().unwrap_or(0.0),
            sigma: 0.0,
            threshold: f64::INFINITY,
            flagged: 0,
            considered: rms.len(),
        };
    }
    let (m, s) = (mean(&rms), std_dev(&rms));
    let threshold = m + n_sigma * s;
    let mut flagged = 0;
    for c in candidates.iter_mut().filter(|c| !c.flags.calibration_veto) {
        if s > 0.0 && c.rms > threshold {
            c.flags.noise = true;
            flagged += 1;
        }
    }
    CutStats {
        mean: m,
        sigma: s,
        threshold,
        flagged,
        considered: rms.len(),
    }
}

/// Flags candidates in search windows where the monitor power is below
/// mean - `n_sigma` sigma. The monitor series must have one entry per
/// search window.
pub fn apply_stability_cut(
    candidates: &mut [EventCandidate],
    monitor_power: &[f64],
    n_windows: usize,
    n_sigma: f64,
) -> Result<CutStats> {
    if monitor_power.len() != n_windows {
        return Err(Error::Misaligned(format!(
            "{} monitor values for {n_windows} search windows",
            monitor_power.len()
        )));
    }
    if let Some(c) = candidates.iter().find(|c| c.window >= n_windows) {
        return Err(Error::Misaligned(format!(
            "candidate in window {} beyond {n_windows}",
            c.window
        )));
    }
    let (m, s) = if monitor_power.len() >= 2 {
        (mean(monitor_power), std_dev(monitor_power))
    } else {
        (monitor_power.first().copied().unwrap_or(0.0), 0.0)
    };
    let threshold = m - n_sigma * s;
    let mut flagged = 0;
    let mut considered = 0;
    for c in candidates.iter_mut().filter(|c| !c.flags.calibration_veto) {
        considered += 1;
        if s > 0.0 && monitor_power[c.window] < threshold {
            c.flags.stability = true;
            flagged += 1;
        }
    }
    Ok(CutStats {
        mean: m,
        sigma: s,
        threshold,
        flagged,
        considered,
    })
}

/// Threshold at the given quantile of calibration-pulse gof values.
pub fn gof_threshold(calibration_gofs: &[f64], quantile_level: f64) -> Result<f64> {
    let finite: Vec<f64> = calibration_gofs
        .iter()
        .copied()
        .filter(|g| g.is_finite())
        .collect();
    if finite.len() < 50 {
        return Err(Error::InsufficientStatistics(format!(
            "gof threshold needs at least 50 calibration pulses, got {}",
            finite.len()
        )));
    }
    Ok(quantile(&finite, quantile_level))
}

/// Flags candidates at or above `min_amplitude` whose gof exceeds `threshold`.
pub fn apply_gof_cut(
    candidates: &mut [EventCandidate],
    threshold: f64,
    min_amplitude: f64,
) -> CutStats {
    let mut flagged = 0;
    let mut considered = 0;
    for c in candidates
        .iter_mut()
        .filter(|c| !c.flags.calibration_veto && c.abs_amplitude >= min_amplitude)
    {
        considered += 1;
        if !(c.gof <= threshold) {
            c.flags.gof = true;
            flagged += 1;
        }
    }
    CutStats {
        mean: f64::NAN,
        sigma: f64::NAN,
        threshold,
        flagged,
        considered,
    }
}

/// Tags candidates within +-`reach` search windows of each scheduled pulse
/// and returns the reconstructed amplitude of every pulse (the largest
/// |amplitude| among its tagged candidates, sign kept). Every pulse must be
/// reconstructed above `min_amplitude`.
pub fn veto_calibration(
    candidates: &mut [EventCandidate],
    schedule: &[f64],
    search_window: f64,
    reach: usize,
    min_amplitude: f64,
) -> Result<Vec<f64>> {
    let mut found = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let (start, end) = reach_range(candidates, t, search_window, reach);
        let reading = pulse_reading(&candidates[start..end], t).map(|c| c.amplitude);
        for c in &mut candidates[start..end] {
            c.flags.calibration_veto = true;
        }
        match reading {
            Some(a) if a.abs() >= min_amplitude => found.push(a),
            other => {
                return Err(Error::DetectorResponse(format!(
                "calibration pulse at {t:.6} s reconstructed at {:?} keV/c, below {min_amplitude}",
                other
            )))
            }
        }
    }
    Ok(found)
}

/// Index range of candidates within `reach` search windows of time `t`.
/// Candidates must be sorted by window.
pub fn reach_range(
    candidates: &[EventCandidate],
    t: f64,
    search_window: f64,
    reach: usize,
) -> (usize, usize) {
    let w = (t / search_window).floor() as i64;
    let lo = (w - reach as i64).max(0) as usize;
    let hi = (w + reach as i64).max(0) as usize;
    let start = candidates.partition_point(|c| c.window < lo);
    let end = candidates.partition_point(|c| c.window <= hi);
    (start, end.max(start))
}

/// Reading of a known pulse at `t` among nearby candidates: the one closest
/// in time among those at least half as large as the strongest. A peak on an
/// analysis-window boundary can appear in both adjacent search windows; this
/// picks one of the two without preferring the larger.
pub fn pulse_reading(nearby: &[EventCandidate], t: f64) -> Option<&EventCandidate> {
    let strongest = nearby.iter().map(|c| c.abs_amplitude).fold(0.0, f64::max);
    nearby
        .iter()
        .filter(|c| c.abs_amplitude >= 0.5 * strongest)
        .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
}

/// Exposure after removing windows flagged by the noise cut, the stability
/// cut or the calibration veto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveTime {
    pub raw: f64,
    pub noise_removed: f64,
    pub stability_removed: f64,
    pub veto_removed: f64,
    pub live: f64,
}

impl LiveTime {
    pub fn removed_fraction(&self) -> f64 {
        if self.raw > 0.0 {
            1.0 - self.live / self.raw
        } else {
            0.0
        }
    }
}

pub fn live_time(candidates: &[EventCandidate], n_windows: usize, search_window: f64) -> LiveTime {
    let raw = n_windows as f64 * search_window;
    let count = |f: &dyn Fn(&EventCandidate) -> bool| {
        candidates.iter().filter(|c| f(c)).count() as f64 * search_window
    };
    let removed = count(&|c| c.flags.removes_live_time());
    LiveTime {
        raw,
        noise_removed: count(&|c| c.flags.noise),
        stability_removed: count(&|c| c.flags.stability),
        veto_removed: count(&|c| c.flags.calibration_veto),
        live: raw - removed,
    }
}
