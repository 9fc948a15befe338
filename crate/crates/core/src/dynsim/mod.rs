//! Readout simulation for the nanosphere's z-motion.
//!
//! The sphere is a damped harmonic oscillator driven by white force noise and
//! by instantaneous impulses (gas collisions, calibration pulses, optional
//! anomalous events). Positions are sampled at the readout rate with white
//! imprecision noise added. A synthetic monitor channel reports one power
//! value per 50 µs search window.
//!
//! Traces can be produced in memory ([`simulate_trajectory`]) or streamed
//! block by block through the [`ReadoutSource`] trait, which is also
//! implemented by in-memory and on-disk traces.

mod integrator;
mod noise_floor;
mod trace_file;

pub use integrator::ExactStepper;
pub use noise_floor::{
    calibrate_noise_floor, measure_pulse_resolution, noise_shape, NoiseFloorSettings,
    PulseResolution, DEFAULT_FILTER_BANDWIDTH,
};
pub use trace_file::{read_truth_csv, write_trace, write_truth_csv, TraceFile, TraceHeader};

use crate::error::{Error, Result};
use crate::kinetics::{sample_collision, total_collision_rate, SpectrumParams};
use crate::units::KEV_C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Length of one trigger-free search window, s.
pub const SEARCH_WINDOW: f64 = 50e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorConfig {
    /// kg.
    pub mass: f64,
    /// Undamped resonance frequency, Hz.
    pub resonance_frequency: f64,
    /// Effective damping rate gamma / 2 pi, Hz.
    pub damping_rate: f64,
    /// Samples per second.
    pub sample_rate: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        OscillatorConfig {
            mass: 1.0e-18,
            resonance_frequency: 48.0e3,
            damping_rate: 1.0e3,
            sample_rate: 5.0e6,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("resonance_frequency", self.resonance_frequency),
            ("damping_rate", self.damping_rate),
            ("sample_rate", self.sample_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping_rate >= self.resonance_frequency {
            return Err(Error::Config(format!(
                "damping rate {} Hz must stay below the resonance frequency {} Hz",
                self.damping_rate, self.resonance_frequency
            )));
        }
        if self.resonance_frequency > 0.5 * self.sample_rate {
            return Err(Error::Config(format!(
                "resonance {} Hz is above the Nyquist frequency {} Hz",
                self.resonance_frequency,
                0.5 * self.sample_rate
            )));
        }
        Ok(())
    }

    /// Omega_z, rad/s.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.resonance_frequency
    }

    /// gamma, s^-1.
    pub fn gamma(&self) -> f64 {
        2.0 * PI * self.damping_rate
    }

    /// Damped angular frequency `sqrt(Omega^2 - gamma^2 / 4)`.
    pub fn omega_damped(&self) -> f64 {
        let w = self.omega();
        let b = 0.5 * self.gamma();
        (w * w - b * b).sqrt()
    }

    pub fn period(&self) -> f64 {
        1.0 / self.resonance_frequency
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Samples per search window.
    pub fn window_samples(&self) -> usize {
        (SEARCH_WINDOW * self.sample_rate).round() as usize
    }

    /// Position response to a unit SI impulse, m / (kg m/s).
    pub fn impulse_response(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let wd = self.omega_damped();
        (-0.5 * self.gamma() * t).exp() * (wd * t).sin() / (self.mass * wd)
    }

    /// Sampled position response to 1 keV/c, m, for `n` samples from the kick.
    pub fn response_template(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| KEV_C * self.impulse_response(k as f64 * self.dt()))
            .collect()
    }

    /// Mechanical susceptibility squared, m^2 / N^2, at frequency `f` Hz.
    pub fn susceptibility_sq(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f;
        let w0 = self.omega();
        let g = self.gamma();
        1.0 / (self.mass * self.mass * ((w0 * w0 - w * w).powi(2) + g * g * w * w))
    }
}

/// Temporary rise of the readout noise, e.g. a vibration transient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBurst {
    pub start: f64,
    pub duration: f64,
    /// Multiplier on the readout noise amplitude.
    pub factor: f64,
}

/// Temporary drop of the monitor-channel power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSag {
    pub start: f64,
    pub duration: f64,
    /// Fractional power loss.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDrift {
    /// Fractional RMS of the monitor power.
    pub fractional_rms: f64,
    /// Correlation time, s.
    pub correlation_time: f64,
    #[serde(default)]
    pub sags: Vec<PowerSag>,
}

impl Default for MonitorDrift {
    fn default() -> Self {
        MonitorDrift {
            fractional_rms: 0.02,
            correlation_time: 1e-3,
            sags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// White position imprecision, m/sqrt(Hz), one-sided.
    pub readout_noise_density: f64,
    /// Thermal force noise from residual gas, N/sqrt(Hz), one-sided.
    #[serde(default)]
    pub thermal_force_density: f64,
    /// Measurement back-action force noise, N/sqrt(Hz), one-sided.
    #[serde(default)]
    pub backaction_force_density: f64,
    #[serde(default)]
    pub monitor: MonitorDrift,
    #[serde(default)]
    pub bursts: Vec<NoiseBurst>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::quiet()
    }
}

impl NoiseConfig {
    /// No stochastic forces and no readout noise.
    pub fn quiet() -> Self {
        NoiseConfig {
            readout_noise_density: 0.0,
            thermal_force_density: 0.0,
            backaction_force_density: 0.0,
            monitor: MonitorDrift::default(),
            bursts: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("readout_noise_density", self.readout_noise_density),
            ("thermal_force_density", self.thermal_force_density),
            ("backaction_force_density", self.backaction_force_density),
            ("monitor.fractional_rms", self.monitor.fractional_rms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.monitor.correlation_time > 0.0) {
            return Err(Error::Config(
                "monitor correlation time must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Total one-sided force PSD, N^2/Hz.
    pub fn force_psd(&self) -> f64 {
        self.thermal_force_density.powi(2) + self.backaction_force_density.powi(2)
    }

    /// Readout PSD, m^2/Hz.
    pub fn readout_psd(&self) -> f64 {
        self.readout_noise_density.powi(2)
    }

    /// Returns a copy with every noise density multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.readout_noise_density *= k;
        out.thermal_force_density *= k;
        out.backaction_force_density *= k;
        out
    }

    /// Two-sided position PSD of the readout in periodogram units (a white
    /// series of variance s^2 has level s^2), at frequency `f`.
    pub fn periodogram_level(&self, osc: &OscillatorConfig, f: f64) -> f64 {
        0.5 * osc.sample_rate * (self.readout_psd() + osc.susceptibility_sq(f) * self.force_psd())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseOrigin {
    Collision,
    Calibration,
    Anomalous,
}

impl ImpulseOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ImpulseOrigin::Collision => "collision",
            ImpulseOrigin::Calibration => "calibration",
            ImpulseOrigin::Anomalous => "anomalous",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "collision" => Ok(ImpulseOrigin::Collision),
            "calibration" => Ok(ImpulseOrigin::Calibration),
            "anomalous" => Ok(ImpulseOrigin::Anomalous),
            other => Err(Error::Format(format!("unknown impulse origin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    /// s.
    pub time: f64,
    /// Signed z-momentum, keV/c.
    pub amplitude: f64,
    pub origin: ImpulseOrigin,
}

/// Time-ordered list of impulses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpulseTrain {
    pub impulses: Vec<Impulse>,
}

impl ImpulseTrain {
    pub fn new(impulses: Vec<Impulse>) -> Self {
        ImpulseTrain { impulses }
    }

    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Impulse> {
        self.impulses.iter()
    }

    pub fn times(&self) -> Vec<f64> {
        self.impulses.iter().map(|i| i.time).collect()
    }

    pub fn of_origin(&self, origin: ImpulseOrigin) -> ImpulseTrain {
        ImpulseTrain::new(
            self.impulses
                .iter()
                .copied()
                .filter(|i| i.origin == origin)
                .collect(),
        )
    }

    /// Checks ordering and that all times lie in `[0, duration)`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        for w in self.impulses.windows(2) {
            if w[1].time <= w[0].time {
                return Err(Error::Domain(format!(
                    "impulse times must increase strictly ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        if let Some(bad) = self
            .impulses
            .iter()
            .find(|i| !(i.time >= 0.0 && i.time < duration))
        {
            return Err(Error::Domain(format!(
                "impulse at {} s outside [0, {duration})",
                bad.time
            )));
        }
        if self.impulses.iter().any(|i| !i.amplitude.is_finite()) {
            return Err(Error::Domain("impulse amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Merges two ordered trains.
    pub fn merge(&self, other: &ImpulseTrain) -> ImpulseTrain {
        let mut all: Vec<Impulse> = self
            .impulses
            .iter()
            .chain(&other.impulses)
            .copied()
            .collect();
        all.sort_by(|a, b| a.time.total_cmp(&b.time));
        ImpulseTrain::new(all)
    }

    /// Shifts every impulse by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> ImpulseTrain {
        ImpulseTrain::new(
            self.impulses
                .iter()
                .map(|i| Impulse {
                    time: i.time + dt,
                    ..*i
                })
                .collect(),
        )
    }
}

/// Poisson train of gas collisions over `duration` seconds.
pub fn sample_impulse_train<R: Rng + ?Sized>(
    params: &SpectrumParams,
    duration: f64,
    rng: &mut R,
) -> Result<ImpulseTrain> {
    params.validate()?;
    if !(duration > 0.0) {
        return Err(Error::Domain(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let rate = total_collision_rate(&params.gas, &params.env, &params.sphere);
    let mut impulses = Vec::new();
    if rate == 0.0 {
        return Ok(ImpulseTrain::new(impulses));
    }
    let gap = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
    let mut t = gap.sample(rng);
    while t < duration {
        let (_, q) = sample_collision(&params.gas, &params.env, &params.sphere, rng);
        impulses.push(Impulse {
            time: t,
            amplitude: q[2],
            origin: ImpulseOrigin::Collision,
        });
        t += gap.sample(rng);
    }
    Ok(ImpulseTrain::new(impulses))
}

/// Calibration pulses at `period, 2 period, ...` strictly before `duration`.
pub fn schedule_calibration_pulses(
    duration: f64,
    period: f64,
    amplitude: f64,
) -> Result<ImpulseTrain> {
    if !(period > 0.0) {
        return Err(Error::Domain(format!(
            "calibration period must be positive, got {period}"
        )));
    }
    let mut impulses = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 * period;
        if t >= duration * (1.0 - 1e-12) {
            break;
        }
        impulses.push(Impulse {
            time: t,
            amplitude,
            origin: ImpulseOrigin::Calibration,
        });
        k += 1;
    }
    Ok(ImpulseTrain::new(impulses))
}

/// Ad-hoc population of non-gas events: Poisson times, Gaussian amplitudes of
/// random sign.
pub fn sample_anomalous_train<R: Rng + ?Sized>(
    rate: f64,
    amplitude_mean: f64,
    amplitude_sigma: f64,
    duration: f64,
    rng: &mut R,
) -> Result<ImpulseTrain> {
    if !(rate >= 0.0 && amplitude_sigma >= 0.0) {
        return Err(Error::Domain(
            "anomalous rate and width must be non-negative".into(),
        ));
    }
    let mut impulses = Vec::new();
    if rate > 0.0 {
        let gap = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
        let mut t = gap.sample(rng);
        while t < duration {
            let z: f64 = StandardNormal.sample(rng);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            impulses.push(Impulse {
                time: t,
                amplitude: sign * (amplitude_mean + amplitude_sigma * z),
                origin: ImpulseOrigin::Anomalous,
            });
            t += gap.sample(rng);
        }
    }
    Ok(ImpulseTrain::new(impulses))
}

/// A fully materialized readout trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutTrace {
    /// Measured z-position, m.
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub duration: f64,
    /// One value per search window.
    pub monitor_power: Vec<f64>,
    /// Times of scheduled calibration pulses, s.
    pub calibration_schedule: Vec<f64>,
    pub truth: Option<ImpulseTrain>,
}

impl ReadoutTrace {
    pub fn window_samples(&self) -> usize {
        (SEARCH_WINDOW * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = (self.duration * self.sample_rate).round() as usize;
        if n != self.samples.len() {
            return Err(Error::Domain(format!(
                "trace holds {} samples, expected {n}",
                self.samples.len()
            )));
        }
        let windows = n / self.window_samples();
        if windows != self.monitor_power.len() {
            return Err(Error::Misaligned(format!(
                "{} monitor values for {windows} search windows",
                self.monitor_power.len()
            )));
        }
        Ok(())
    }

    pub fn source(&self) -> MemorySource<'_> {
        MemorySource {
            trace: self,
            pos: 0,
        }
    }
}

/// Sequential access to a readout series.
pub trait ReadoutSource {
    fn sample_rate(&self) -> f64;
    fn total_samples(&self) -> usize;
    fn monitor_power(&self) -> &[f64];
    fn calibration_schedule(&self) -> &[f64];
    /// Fills `out` from the current position; returns the number of samples
    /// written, zero at the end.
    fn read(&mut self, out: &mut [f64]) -> Result<usize>;

    fn duration(&self) -> f64 {
        self.total_samples() as f64 / self.sample_rate()
    }
}

pub struct MemorySource<'a> {
    trace: &'a ReadoutTrace,
    pos: usize,
}

impl ReadoutSource for MemorySource<'_> {
    fn sample_rate(&self) -> f64 {
        self.trace.sample_rate
    }
    fn total_samples(&self) -> usize {
        self.trace.samples.len()
    }
    fn monitor_power(&self) -> &[f64] {
        &self.trace.monitor_power
    }
    fn calibration_schedule(&self) -> &[f64] {
        &self.trace.calibration_schedule
    }
    fn read(&mut self, out: &mut [f64]) -> Result<usize> {
        let n = out.len().min(self.trace.samples.len() - self.pos);
        out[..n].copy_from_slice(&self.trace.samples[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

const STREAM_FORCE: u64 = 1;
const STREAM_READOUT: u64 = 2;
const STREAM_MONITOR: u64 = 3;

fn synthesize_monitor(drift: &MonitorDrift, n_windows: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_MONITOR);
    let rho = (-SEARCH_WINDOW / drift.correlation_time).exp();
    let kick = (1.0 - rho * rho).sqrt();
    let mut x: f64 = StandardNormal.sample(&mut rng);
    (0..n_windows)
        .map(|k| {
            if k > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + kick * z;
            }
            let t = (k as f64 + 0.5) * SEARCH_WINDOW;
            let sag: f64 = drift
                .sags
                .iter()
                .filter(|s| t >= s.start && t < s.start + s.duration)
                .map(|s| s.depth)
                .sum();
            ((1.0 + drift.fractional_rms * x) * (1.0 - sag)).max(1e-9)
        })
        .collect()
}

/// Streaming simulator. Output is independent of the block sizes requested.
pub struct TraceSimulator {
    stepper: ExactStepper,
    /// (sample index, velocity jump m/s), ascending.
    kicks: Vec<(usize, f64)>,
    next_kick: usize,
    state: [f64; 2],
    readout_sigma: f64,
    bursts: Vec<(usize, usize, f64)>,
    force_rng: ChaCha8Rng,
    readout_rng: ChaCha8Rng,
    pos: usize,
    n_samples: usize,
    sample_rate: f64,
    monitor: Vec<f64>,
    schedule: Vec<f64>,
}

impl TraceSimulator {
    pub fn new(
        osc: &OscillatorConfig,
        noise: &NoiseConfig,
        train: &ImpulseTrain,
        duration: f64,
        seed: u64,
    ) -> Result<Self> {
        osc.validate()?;
        noise.validate()?;
        if !(duration > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {duration}"
            )));
        }
        train.validate(duration)?;
        let n_samples = (duration * osc.sample_rate).round() as usize;
        let kicks: Vec<(usize, f64)> = train
            .iter()
            .map(|i| {
                let k =
                    ((i.time * osc.sample_rate).round() as usize).min(n_samples.saturating_sub(1));
                (k, i.amplitude * KEV_C / osc.mass)
            })
            .collect();
        let bursts = noise
            .bursts
            .iter()
            .map(|b| {
                let lo = (b.start * osc.sample_rate).round().max(0.0) as usize;
                let hi = ((b.start + b.duration) * osc.sample_rate).round().max(0.0) as usize;
                (lo, hi, b.factor)
            })
            .collect();
        let mut force_rng = ChaCha8Rng::seed_from_u64(seed);
        force_rng.set_stream(STREAM_FORCE);
        let mut readout_rng = ChaCha8Rng::seed_from_u64(seed);
        readout_rng.set_stream(STREAM_READOUT);
        let stepper = ExactStepper::new(
            osc.mass,
            osc.omega(),
            osc.gamma(),
            osc.dt(),
            noise.force_psd(),
        );
        // Start from the stationary distribution.
        let var_z =
            noise.force_psd() / (4.0 * osc.mass.powi(2) * osc.gamma() * osc.omega().powi(2));
        let z0: f64 = StandardNormal.sample(&mut force_rng);
        let v0: f64 = StandardNormal.sample(&mut force_rng);
        let state = [var_z.sqrt() * z0, osc.omega() * var_z.sqrt() * v0];
        let n_windows = n_samples / osc.window_samples();
        Ok(TraceSimulator {
            stepper,
            kicks,
            next_kick: 0,
            state,
            readout_sigma: (noise.readout_psd() * 0.5 * osc.sample_rate).sqrt(),
            bursts,
            force_rng,
            readout_rng,
            pos: 0,
            n_samples,
            sample_rate: osc.sample_rate,
            monitor: synthesize_monitor(&noise.monitor, n_windows, seed),
            schedule: train.of_origin(ImpulseOrigin::Calibration).times(),
        })
    }

    /// Overrides the calibration schedule reported to readers.
    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.schedule = schedule;
        self
    }
}

impl ReadoutSource for TraceSimulator {
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    fn total_samples(&self) -> usize {
        self.n_samples
    }
    fn monitor_power(&self) -> &[f64] {
        &self.monitor
    }
    fn calibration_schedule(&self) -> &[f64] {
        &self.schedule
    }

    fn read(&mut self, out: &mut [f64]) -> Result<usize> {
        let n = out.len().min(self.n_samples - self.pos);
        for slot in out.iter_mut().take(n) {
            let i = self.pos;
            while self.next_kick < self.kicks.len() && self.kicks[self.next_kick].0 == i {
                self.state[1] += self.kicks[self.next_kick].1;
                self.next_kick += 1;
            }
            let mut sigma = self.readout_sigma;
            for &(lo, hi, f) in &self.bursts {
                if i >= lo && i < hi {
                    sigma *= f;
                }
            }
            let e: f64 = StandardNormal.sample(&mut self.readout_rng);
            *slot = self.state[0] + sigma * e;
            self.state = self.stepper.step(self.state, &mut self.force_rng);
            self.pos += 1;
        }
        Ok(n)
    }
}

/// Simulates a complete trace in memory.
pub fn simulate_trajectory(
    osc: &OscillatorConfig,
    noise: &NoiseConfig,
    train: &ImpulseTrain,
    duration: f64,
    seed: u64,
) -> Result<ReadoutTrace> {
    let mut sim = TraceSimulator::new(osc, noise, train, duration, seed)?;
    let mut samples = vec![0.0; sim.total_samples()];
    let mut filled = 0;
    while filled < samples.len() {
        filled += sim.read(&mut samples[filled..])?;
    }
    Ok(ReadoutTrace {
        samples,
        sample_rate: osc.sample_rate,
        duration,
        monitor_power: sim.monitor.clone(),
        calibration_schedule: sim.schedule.clone(),
        truth: Some(train.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configuration_errors() {
        let mut o = OscillatorConfig::default();
        o.damping_rate = 60e3;
        assert!(matches!(o.validate(), Err(Error::Config(_))));
        let mut o = OscillatorConfig::default();
        o.sample_rate = 80e3;
        assert!(matches!(o.validate(), Err(Error::Config(_))));
        assert!(OscillatorConfig::default().validate().is_ok());
    }

    #[test]
    fn schedule_arithmetic() {
        let t = schedule_calibration_pulses(3.0, 0.3, 1040.0).unwrap();
        assert_eq!(t.len(), 9);
        assert!((t.impulses[0].time - 0.3).abs() < 1e-12);
        assert!((t.impulses[8].time - 2.7).abs() < 1e-12);
        assert!(t.iter().all(|i| i.origin == ImpulseOrigin::Calibration));
        assert!(schedule_calibration_pulses(0.2, 0.3, 1040.0)
            .unwrap()
            .is_empty());
        assert!(schedule_calibration_pulses(1.0, 0.0, 1040.0).is_err());
    }

    #[test]
    fn streaming_is_block_size_independent() {
        let osc = OscillatorConfig::default();
        let mut noise = NoiseConfig::quiet();
        noise.readout_noise_density = 1e-12;
        noise.backaction_force_density = 1e-20;
        let train = schedule_calibration_pulses(0.01, 0.003, 500.0).unwrap();
        let whole = simulate_trajectory(&osc, &noise, &train, 0.01, 9).unwrap();
        let mut sim = TraceSimulator::new(&osc, &noise, &train, 0.01, 9).unwrap();
        let mut got = Vec::new();
        let mut buf = vec![0.0; 777];
        loop {
            let n = sim.read(&mut buf).unwrap();
            if n == 0 {
                break;
            }
            got.extend_from_slice(&buf[..n]);
        }
        assert_eq!(got, whole.samples);
    }

    #[test]
    fn monitor_length_matches_windows() {
        let osc = OscillatorConfig::default();
        let t = simulate_trajectory(
            &osc,
            &NoiseConfig::quiet(),
            &ImpulseTrain::default(),
            0.1,
            1,
        )
        .unwrap();
        assert_eq!(t.monitor_power.len(), 2000);
        t.validate().unwrap();
    }
}
