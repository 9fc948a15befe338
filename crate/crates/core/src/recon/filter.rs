//! Frequency-domain optimal filter for impulse amplitudes.
//!
//! Each 100 ms analysis window gets its own noise PSD (Welch average over the
//! window, skipping segments that contain scheduled calibration pulses or
//! excess power) and its own filter. The FFT spans the window plus margins
//! of neighbouring data, so the output is valid over the window and far
//! enough into the margins to evaluate candidate context.

use crate::dynsim::OscillatorConfig;
use crate::error::{Error, Result};
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Analysis window length, s.
pub const ANALYSIS_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    /// FFT length; must exceed the window length.
    pub fft_len: usize,
    /// Welch segment length.
    pub psd_segment: usize,
    /// Segments with power above this multiple of the median are skipped.
    pub outlier_factor: f64,
    /// Fewer usable segments than this marks the filter as degraded.
    pub min_segments: usize,
    /// Time after a scheduled calibration pulse kept out of the PSD, s.
    pub pulse_guard: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            fft_len: 1 << 19,
            psd_segment: 1 << 15,
            outlier_factor: 3.0,
            min_segments: 4,
            pulse_guard: 3e-3,
        }
    }
}

/// Two-sided noise level per frequency bin in periodogram units: white noise
/// of per-sample variance s^2 has level s^2 everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePsd {
    /// Bin `k` is frequency `k fs / (2 (len - 1))`.
    pub level: Vec<f64>,
    pub segments_used: usize,
    pub degraded: bool,
}

/// Matched-filter output over one padded analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredWindow {
    /// Absolute sample index of `output[0]` (may be negative at the start).
    pub origin: i64,
    /// Index into `output` of the first in-window sample.
    pub margin: usize,
    pub window_len: usize,
    /// Amplitude estimate per lag, keV/c.
    pub output: Vec<f64>,
    /// Predicted output noise, keV/c.
    pub sigma: f64,
    pub degraded: bool,
    pub psd_segments: usize,
}

impl FilteredWindow {
    /// In-window part of the output.
    pub fn in_window(&self) -> &[f64] {
        &self.output[self.margin..self.margin + self.window_len]
    }
}

pub struct MatchedFilter {
    osc: OscillatorConfig,
    settings: FilterSettings,
    window_len: usize,
    /// Spectrum of the readout response to 1 keV/c.
    response: Vec<Complex<f64>>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    seg_forward: Arc<dyn RealToComplex<f64>>,
    hann: Vec<f64>,
    hann_norm: f64,
}

impl MatchedFilter {
    pub fn new(osc: &OscillatorConfig, settings: FilterSettings) -> Result<Self> {
        osc.validate()?;
        let window_len = (ANALYSIS_WINDOW * osc.sample_rate).round() as usize;
        let n = settings.fft_len;
        if n <= window_len || n % 2 != 0 {
            return Err(Error::Config(format!(
                "fft length {n} must be even and exceed the {window_len}-sample window"
            )));
        }
        if settings.psd_segment < 64
            || settings.psd_segment > window_len
            || settings.psd_segment % 2 != 0
        {
            return Err(Error::Config(format!(
                "invalid PSD segment length {}",
                settings.psd_segment
            )));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let seg_forward = planner.plan_fft_forward(settings.psd_segment);
        let mut tpl = osc.response_template(n);
        let mut response = forward.make_output_vec();
        forward
            .process(&mut tpl, &mut response)
            .map_err(|e| Error::Domain(e.to_string()))?;
        let l = settings.psd_segment;
        let hann: Vec<f64> = (0..l)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / l as f64).cos()))
            .collect();
        let hann_norm = hann.iter().map(|w| w * w).sum();
        Ok(MatchedFilter {
            osc: *osc,
            settings,
            window_len,
            response,
            forward,
            inverse,
            seg_forward,
            hann,
            hann_norm,
        })
    }

    pub fn oscillator(&self) -> &OscillatorConfig {
        &self.osc
    }

    pub fn settings(&self) -> &FilterSettings {
        &self.settings
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn fft_len(&self) -> usize {
        self.settings.fft_len
    }

    /// Samples of neighbouring data on each side of the window.
    pub fn margin(&self) -> usize {
        (self.settings.fft_len - self.window_len) / 2
    }

    /// Welch estimate from `data`, skipping segments that overlap the
    /// half-open sample ranges in `exclude`.
    pub fn estimate_psd(&self, data: &[f64], exclude: &[(usize, usize)]) -> Result<NoisePsd> {
        let l = self.settings.psd_segment;
        let hop = l / 2;
        if data.len() < l {
            return Err(Error::Domain("PSD region shorter than one segment".into()));
        }
        let starts: Vec<usize> = (0..=(data.len() - l) / hop).map(|k| k * hop).collect();
        let powers: Vec<f64> = starts
            .iter()
            .map(|&s| data[s..s + l].iter().map(|v| v * v).sum())
            .collect();
        let clean: Vec<bool> = starts
            .iter()
            .map(|&s| !exclude.iter().any(|&(lo, hi)| lo < s + l && hi > s))
            .collect();
        let mut clean_powers: Vec<f64> = powers
            .iter()
            .zip(&clean)
            .filter(|(_, &c)| c)
            .map(|(p, _)| *p)
            .collect();
        clean_powers.sort_by(|a, b| a.total_cmp(b));
        let median = if clean_powers.is_empty() {
            f64::INFINITY
        } else {
            clean_powers[clean_powers.len() / 2]
        };
        let mut use_seg: Vec<bool> = clean
            .iter()
            .zip(&powers)
            .map(|(&c, &p)| c && p <= self.settings.outlier_factor * median)
            .collect();
        let mut used = use_seg.iter().filter(|&&u| u).count();
        let degraded = used < self.settings.min_segments;
        if used == 0 {
            use_seg = vec![true; starts.len()];
            used = starts.len();
        }
        let mut acc = vec![0.0; l / 2 + 1];
        let mut buf = self.seg_forward.make_input_vec();
        let mut spec = self.seg_forward.make_output_vec();
        for (&s, _) in starts.iter().zip(&use_seg).filter(|(_, &u)| u) {
            for (b, (x, w)) in buf.iter_mut().zip(data[s..s + l].iter().zip(&self.hann)) {
                *b = x * w;
            }
            self.seg_forward
                .process(&mut buf, &mut spec)
                .map_err(|e| Error::Domain(e.to_string()))?;
            for (a, c) in acc.iter_mut().zip(&spec) {
                *a += c.norm_sqr();
            }
        }
        let scale = 1.0 / (used as f64 * self.hann_norm);
        Ok(NoisePsd {
            level: acc.into_iter().map(|a| a * scale).collect(),
            segments_used: used,
            degraded,
        })
    }

    /// Filters one padded window. `padded` has `fft_len` samples whose
    /// first in-window sample sits at [`Self::margin`]; `origin` is the absolute
    /// index of `padded[0]`.
    pub fn filter(&self, padded: &[f64], origin: i64, psd: &NoisePsd) -> Result<FilteredWindow> {
        let n = self.settings.fft_len;
        if padded.len() != n {
            return Err(Error::Domain(format!(
                "padded window has {} samples, expected {n}",
                padded.len()
            )));
        }
        let margin = self.margin();
        let half = n / 2;
        let welch_bins = psd.level.len() - 1;
        let ratio = welch_bins as f64 / half as f64;
        let peak = psd.level.iter().cloned().fold(0.0, f64::max);
        // Without noise any weighting is optimal; a flat one keeps the
        // normalization defined.
        let noiseless = !(peak > 0.0);
        let floor = peak * 1e-30;
        let mut input = padded.to_vec();
        let mut spec = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut spec)
            .map_err(|e| Error::Domain(e.to_string()))?;
        let mut norm = 0.0;
        for (k, (x, s)) in spec.iter_mut().zip(&self.response).enumerate() {
            let pos = k as f64 * ratio;
            let i = (pos as usize).min(welch_bins - 1);
            let t = pos - i as f64;
            let j = if noiseless {
                1.0
            } else {
                ((1.0 - t) * psd.level[i] + t * psd.level[i + 1]).max(floor)
            };
            let w = s.norm_sqr() / j;
            norm += if k == 0 || k == half { w } else { 2.0 * w };
            *x = s.conj() * *x / j;
        }
        spec[0].im = 0.0;
        spec[half].im = 0.0;
        let mut output = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spec, &mut output)
            .map_err(|e| Error::Domain(e.to_string()))?;
        let inv = 1.0 / norm;
        output.iter_mut().for_each(|v| *v *= inv);
        Ok(FilteredWindow {
            origin,
            margin,
            window_len: self.window_len,
            output,
            sigma: if noiseless {
                0.0
            } else {
                (n as f64 / norm).sqrt()
            },
            degraded: psd.degraded,
            psd_segments: psd.segments_used,
        })
    }

    /// PSD estimate from the first `valid` in-window samples of `padded`,
    /// then filtering. `pulses` are absolute sample indices of scheduled
    /// calibration pulses.
    pub fn process(
        &self,
        padded: &[f64],
        origin: i64,
        valid: usize,
        pulses: &[i64],
    ) -> Result<FilteredWindow> {
        let margin = self.margin();
        let valid = valid.min(self.window_len);
        let start = origin + margin as i64;
        let guard = (self.settings.pulse_guard * self.osc.sample_rate).round() as i64;
        let exclude: Vec<(usize, usize)> = pulses
            .iter()
            .filter_map(|&p| {
                let lo = (p - start - 1).max(0);
                let hi = (p - start + guard).min(valid as i64);
                (hi > 0 && lo < valid as i64).then_some((lo as usize, hi as usize))
            })
            .collect();
        let psd = self.estimate_psd(&padded[margin..margin + valid], &exclude)?;
        self.filter(padded, origin, &psd)
    }

    /// Predicted output noise for a known PSD model `level(f)`.
    pub fn predicted_sigma(&self, level: impl Fn(f64) -> f64) -> f64 {
        let n = self.settings.fft_len;
        let half = n / 2;
        let df = self.osc.sample_rate / n as f64;
        let mut norm = 0.0;
        for (k, s) in self.response.iter().enumerate() {
            let w = s.norm_sqr() / level(k as f64 * df);
            norm += if k == 0 || k == half { w } else { 2.0 * w };
        }
        (n as f64 / norm).sqrt()
    }
}

/// Filters a whole in-memory trace and returns the stitched amplitude series.
pub fn matched_filter(
    samples: &[f64],
    filter: &MatchedFilter,
    calibration_pulses: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    let fs = filter.oscillator().sample_rate;
    let pulses: Vec<i64> = calibration_pulses
        .iter()
        .map(|t| (t * fs).round() as i64)
        .collect();
    let w = filter.window_len();
    let total = samples.len();
    let n_windows = total.div_ceil(w);
    let mut padded = vec![0.0; filter.fft_len()];
    for k in 0..n_windows {
        let start = window_start(k, n_windows, total, w);
        let origin = start as i64 - filter.margin() as i64;
        fill_padded(samples, origin, &mut padded);
        let fw = filter.process(&padded, origin, w.min(total - start), &pulses)?;
        let skip = k * w - start;
        let take = w.min(total - k * w);
        out.extend_from_slice(&fw.in_window()[skip..skip + take]);
    }
    Ok(out)
}

/// First sample of analysis window `k` of `count`. The last window is
/// aligned to the end of the trace when the trace is longer than a window,
/// so that its noise estimate sees a full window of data.
pub fn window_start(k: usize, count: usize, total: usize, window: usize) -> usize {
    if k + 1 == count && total > window {
        total - window
    } else {
        k * window
    }
}

/// Copies `samples[origin..origin + out.len()]`, zero outside the trace.
pub fn fill_padded(samples: &[f64], origin: i64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let idx = origin + i as i64;
        *o = if idx >= 0 && (idx as usize) < samples.len() {
            samples[idx as usize]
        } else {
            0.0
        };
    }
}
