//! Setting the noise level so that reconstructed pulses have a chosen spread.

use super::{schedule_calibration_pulses, NoiseConfig, OscillatorConfig, TraceSimulator};
use crate::error::{Error, Result};
use crate::numeric::{mean, std_dev};
use crate::recon::{reconstruct, FilterSettings, MatchedFilter, ReconSettings};

/// Bandwidth tying back-action force noise to readout imprecision, Hz.
pub const DEFAULT_FILTER_BANDWIDTH: f64 = 25e3;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloorSettings {
    pub pulses: usize,
    /// keV/c.
    pub amplitude: f64,
    /// s.
    pub spacing: f64,
    pub filter_bandwidth: f64,
    pub seed: u64,
    /// Accepted relative mismatch between measured and target spread.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub filter: FilterSettings,
}

impl Default for NoiseFloorSettings {
    fn default() -> Self {
        NoiseFloorSettings {
            pulses: 200,
            amplitude: 1040.0,
            spacing: 0.025,
            filter_bandwidth: DEFAULT_FILTER_BANDWIDTH,
            seed: 0x5eed_f100,
            tolerance: 0.02,
            max_iterations: 8,
            filter: FilterSettings::default(),
        }
    }
}

/// Unit readout imprecision (1e-12 m/sqrt(Hz)) with back-action force noise
/// S_F = S_x (2 m omega0 2 pi bandwidth)^2.
pub fn noise_shape(osc: &OscillatorConfig, bandwidth: f64) -> NoiseConfig {
    let sx = 1e-12;
    NoiseConfig {
        readout_noise_density: sx,
        backaction_force_density: sx
            * 2.0
            * osc.mass
            * osc.omega()
            * 2.0
            * std::f64::consts::PI
            * bandwidth,
        ..NoiseConfig::quiet()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseResolution {
    /// Standard deviation of reconstructed amplitudes, keV/c.
    pub sigma: f64,
    pub mean: f64,
    pub amplitudes: Vec<f64>,
}

/// Injects a train of identical pulses into a collision-free trace and
/// returns the spread of their reconstructed amplitudes.
pub fn measure_pulse_resolution(
    osc: &OscillatorConfig,
    noise: &NoiseConfig,
    settings: &NoiseFloorSettings,
) -> Result<PulseResolution> {
    if settings.pulses < 2 {
        return Err(Error::Config("need at least two pulses".into()));
    }
    let duration = (settings.pulses + 1) as f64 * settings.spacing;
    let train = schedule_calibration_pulses(duration, settings.spacing, settings.amplitude)?;
    let mut sim = TraceSimulator::new(osc, noise, &train, duration, settings.seed)?;
    let filter = MatchedFilter::new(osc, settings.filter)?;
    let recon = ReconSettings {
        filter: settings.filter,
        ..ReconSettings::default()
    };
    let rec = reconstruct(&mut sim, &filter, None, &recon, &[], 0)?;
    let mut amplitudes = Vec::with_capacity(train.len());
    for p in train.iter() {
        let c = rec.pulse_reading(p.time, recon.veto_reach).ok_or_else(|| {
            Error::DetectorResponse(format!("no candidate near pulse at {} s", p.time))
        })?;
        amplitudes.push(c.amplitude);
    }
    Ok(PulseResolution {
        sigma: std_dev(&amplitudes),
        mean: mean(&amplitudes),
        amplitudes,
    })
}

/// Scales the noise shape until pulses reconstruct with spread `target`
/// keV/c. The start value comes from the filter's predicted noise.
pub fn calibrate_noise_floor(
    osc: &OscillatorConfig,
    target: f64,
    settings: &NoiseFloorSettings,
) -> Result<NoiseConfig> {
    if !(target > 0.0 && target <= 200.0) {
        return Err(Error::Domain(format!(
            "target resolution must lie in (0, 200] keV/c, got {target}"
        )));
    }
    osc.validate()?;
    let shape = noise_shape(osc, settings.filter_bandwidth);
    let filter = MatchedFilter::new(osc, settings.filter)?;
    let predicted = filter.predicted_sigma(|f| shape.periodogram_level(osc, f));
    let mut k = target / predicted;
    let mut last = f64::NAN;
    for it in 0..settings.max_iterations {
        let noise = shape.scaled(k);
        let measured = measure_pulse_resolution(osc, &noise, settings)?.sigma;
        log::debug!("noise floor iteration {it}: k = {k:.4e}, sigma = {measured:.3}");
        last = measured;
        if (measured / target - 1.0).abs() <= settings.tolerance {
            return Ok(noise);
        }
        if !(measured > 0.0 && measured.is_finite()) {
            break;
        }
        k *= target / measured;
    }
    Err(Error::Calibration(format!(
        "noise floor did not converge to {target} keV/c (last measured {last:.3}, scale {k:.4e})"
    )))
}
