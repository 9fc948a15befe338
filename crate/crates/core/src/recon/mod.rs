//! Impulse reconstruction from readout traces.
//!
//! A trace is processed in 100 ms analysis windows, each with its own noise
//! PSD and matched filter. The filter output is searched for one candidate
//! per 50 µs window; every candidate carries the RMS of its surroundings and
//! a goodness-of-fit against the averaged calibration response. Cuts then
//! flag candidates, and surviving ones are binned by |amplitude| with the
//! corresponding live time.

mod calib;
mod cuts;
mod filter;
mod scan;
mod spectrum;
mod template;

pub use calib::{
    calibration_sweep, measure_resolution_and_linearity, GroupResolution, ResolutionReport,
    MIN_PULSES_PER_GROUP,
};
pub use cuts::{
    apply_gof_cut, apply_noise_cut, apply_stability_cut, gof_threshold, live_time, pulse_reading,
    reach_range, veto_calibration, CutStats, LiveTime,
};
pub use filter::{
    fill_padded, matched_filter, window_start, FilterSettings, FilteredWindow, MatchedFilter,
    NoisePsd, ANALYSIS_WINDOW,
};
pub use scan::{
    find_extremum, goodness_of_fit, scan_events, scan_series, surrounding_rms, ScanGeometry,
};
pub use spectrum::{
    bin_events, default_bin_edges, BinnedSpectrum, SpectrumMeta, ANALYSIS_THRESHOLD,
};
pub use template::{build_template, Template, MIN_TEMPLATE_SEGMENTS};

use crate::dynsim::{OscillatorConfig, ReadoutSource, SEARCH_WINDOW};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Quality flags; once set they are never cleared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutFlags {
    pub noise: bool,
    pub stability: bool,
    pub gof: bool,
    pub calibration_veto: bool,
}

impl CutFlags {
    pub fn bits(&self) -> u8 {
        self.noise as u8
            | (self.stability as u8) << 1
            | (self.gof as u8) << 2
            | (self.calibration_veto as u8) << 3
    }

    pub fn from_bits(b: u8) -> Self {
        CutFlags {
            noise: b & 1 != 0,
            stability: b & 2 != 0,
            gof: b & 4 != 0,
            calibration_veto: b & 8 != 0,
        }
    }

    pub fn any(&self) -> bool {
        self.bits() != 0
    }

    /// Noise, stability and veto flags remove the whole search window.
    pub fn removes_live_time(&self) -> bool {
        self.noise || self.stability || self.calibration_veto
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCandidate {
    /// s.
    pub time: f64,
    /// Signed amplitude, keV/c.
    pub amplitude: f64,
    pub abs_amplitude: f64,
    pub gof: f64,
    /// RMS of the filter output around the candidate, keV/c.
    pub rms: f64,
    /// Search-window index.
    pub window: usize,
    pub flags: CutFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconSettings {
    pub filter: FilterSettings,
    /// s.
    pub search_window: f64,
    /// Half-width of the noise-cut RMS region, s.
    pub rms_half_width: f64,
    /// Half-width around the peak left out of the RMS, oscillation periods.
    pub exclusion_periods: f64,
    /// Half-width of the gof region, oscillation periods.
    pub gof_periods: f64,
    pub noise_cut_sigma: f64,
    pub stability_cut_sigma: f64,
    pub gof_quantile: f64,
    /// Smallest |amplitude| subject to the gof cut, keV/c.
    pub gof_min_amplitude: f64,
    /// Scheduled pulses must reconstruct above this, keV/c.
    pub calibration_min_amplitude: f64,
    /// Search windows on each side of a scheduled pulse that are vetoed.
    pub veto_reach: usize,
}

impl Default for ReconSettings {
    fn default() -> Self {
        ReconSettings {
            filter: FilterSettings::default(),
            search_window: SEARCH_WINDOW,
            rms_half_width: 125e-6,
            exclusion_periods: 2.0,
            gof_periods: 10.0,
            noise_cut_sigma: 1.0,
            stability_cut_sigma: 1.0,
            gof_quantile: 0.98,
            gof_min_amplitude: ANALYSIS_THRESHOLD,
            calibration_min_amplitude: 600.0,
            veto_reach: 1,
        }
    }
}

impl ReconSettings {
    pub fn geometry(&self, osc: &OscillatorConfig) -> ScanGeometry {
        let fs = osc.sample_rate;
        let per = osc.period() * fs;
        ScanGeometry {
            window: (self.search_window * fs).round() as usize,
            rms_half: (self.rms_half_width * fs).round() as usize,
            rms_exclude: (self.exclusion_periods * per).round() as usize,
            gof_half: (self.gof_periods * per).round() as usize,
        }
    }
}

/// Output of the streaming reconstruction pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub candidates: Vec<EventCandidate>,
    pub n_windows: usize,
    pub search_window: f64,
    /// Predicted filter noise per analysis window, keV/c.
    pub window_sigma: Vec<f64>,
    pub degraded_windows: Vec<usize>,
    /// Filter output around each requested sample index.
    pub segments: Vec<Vec<f64>>,
}

impl Reconstruction {
    pub fn raw_time(&self) -> f64 {
        self.n_windows as f64 * self.search_window
    }

    /// Reading of a known pulse at time `t`, see [`pulse_reading`].
    pub fn pulse_reading(&self, t: f64, reach: usize) -> Option<&EventCandidate> {
        let (start, end) = reach_range(&self.candidates, t, self.search_window, reach);
        pulse_reading(&self.candidates[start..end], t)
    }
}

/// Streams `source` through the matched filter and the candidate search.
/// `capture` lists absolute sample indices whose surrounding output
/// (`+- capture_half` samples) is returned in `segments`, in order.
pub fn reconstruct(
    source: &mut dyn ReadoutSource,
    filter: &MatchedFilter,
    template: Option<&Template>,
    settings: &ReconSettings,
    capture: &[i64],
    capture_half: usize,
) -> Result<Reconstruction> {
    let osc = filter.oscillator();
    let fs = source.sample_rate();
    if (fs - osc.sample_rate).abs() > 1e-9 * fs {
        return Err(Error::Config(format!(
            "trace sampled at {fs} Hz but filter built for {} Hz",
            osc.sample_rate
        )));
    }
    let geom = settings.geometry(osc);
    let (w, m, n) = (filter.window_len(), filter.margin(), filter.fft_len());
    if capture_half + 1 > m || geom.gof_half.max(geom.rms_half) + geom.window > m {
        return Err(Error::Config(
            "filter margin too small for the requested context".into(),
        ));
    }
    let total = source.total_samples();
    let n_windows = total / geom.window;
    let n_analysis = total.div_ceil(w);
    let schedule: Vec<i64> = source
        .calibration_schedule()
        .iter()
        .map(|t| (t * fs).round() as i64)
        .collect();
    let mut capture_sorted: Vec<(usize, i64)> = capture.iter().copied().enumerate().collect();
    capture_sorted.sort_by_key(|c| c.1);
    let mut segments: Vec<Vec<f64>> = vec![Vec::new(); capture.len()];
    let mut next_capture = 0;

    let mut candidates = Vec::with_capacity(n_windows);
    let mut window_sigma = Vec::with_capacity(n_analysis);
    let mut degraded = Vec::new();
    let mut buf: Vec<f64> = Vec::with_capacity(n + (1 << 16));
    let mut buf_start: i64 = 0;
    let mut block = vec![0.0; 1 << 16];
    let mut exhausted = false;
    let mut padded = vec![0.0; n];

    for k in 0..n_analysis {
        let start = window_start(k, n_analysis, total, w);
        let origin = start as i64 - m as i64;
        let need_end = origin + n as i64;
        while !exhausted && buf_start + (buf.len() as i64) < need_end {
            let r = source.read(&mut block)?;
            if r == 0 {
                exhausted = true;
            } else {
                buf.extend_from_slice(&block[..r]);
            }
        }
        let buf_end = buf_start + buf.len() as i64;
        for (i, p) in padded.iter_mut().enumerate() {
            let abs = origin + i as i64;
            *p = if abs >= buf_start && abs < buf_end {
                buf[(abs - buf_start) as usize]
            } else {
                0.0
            };
        }
        let fw = filter.process(&padded, origin, w.min(total - start), &schedule)?;
        window_sigma.push(fw.sigma);
        if fw.degraded {
            log::warn!(
                "analysis window {k}: degraded noise estimate ({} segments)",
                fw.psd_segments
            );
            degraded.push(k);
        }
        let first = (k * w) / geom.window;
        let last = (((k + 1) * w) / geom.window).min(n_windows);
        if last > first {
            candidates.extend(scan_series(
                &fw.output,
                origin,
                first,
                last - first,
                fs,
                &geom,
                template,
                fw.sigma,
            ));
        }
        let win_end = ((k + 1) * w) as i64;
        while next_capture < capture_sorted.len() && capture_sorted[next_capture].1 < win_end {
            let (slot, p) = capture_sorted[next_capture];
            let rel = p - origin;
            if rel >= capture_half as i64 && rel + (capture_half as i64) < n as i64 {
                let r = rel as usize;
                segments[slot] = fw.output[r - capture_half..=r + capture_half].to_vec();
            }
            next_capture += 1;
        }
        let keep_from = if k + 1 < n_analysis {
            window_start(k + 1, n_analysis, total, w) as i64 - m as i64
        } else {
            win_end
        };
        if keep_from > buf_start {
            let drop = ((keep_from - buf_start) as usize).min(buf.len());
            buf.drain(..drop);
            buf_start += drop as i64;
        }
    }
    Ok(Reconstruction {
        candidates,
        n_windows,
        search_window: settings.search_window,
        window_sigma,
        degraded_windows: degraded,
        segments,
    })
}

/// Template, gof threshold and pulse readings from a run with known pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub template: Template,
    pub gof_threshold: f64,
    /// Reconstructed amplitude per pulse, in input order, keV/c.
    pub readings: Vec<f64>,
    pub gofs: Vec<f64>,
    /// Mean predicted filter noise over the run, keV/c.
    pub filter_sigma: f64,
}

/// Reconstructs a calibration run whose pulses occur at `pulse_times`,
/// averages the output around them into a template and sets the gof
/// threshold at `settings.gof_quantile` of the pulses' own gof values.
/// `reach` is the search-window reach used to read each pulse.
pub fn characterize_calibration_run(
    source: &mut dyn ReadoutSource,
    filter: &MatchedFilter,
    settings: &ReconSettings,
    pulse_times: &[f64],
    reach: usize,
) -> Result<CalibrationOutcome> {
    let osc = *filter.oscillator();
    let fs = osc.sample_rate;
    let geom = settings.geometry(&osc);
    let half = geom.gof_half + (2.0 * osc.period() * fs).round() as usize;
    let indices: Vec<i64> = pulse_times
        .iter()
        .map(|t| (t * fs).round() as i64)
        .collect();
    let rec = reconstruct(source, filter, None, settings, &indices, half)?;
    let filter_sigma = crate::numeric::mean(&rec.window_sigma);
    let mut readings = Vec::with_capacity(pulse_times.len());
    let mut segments = Vec::with_capacity(pulse_times.len());
    let mut offsets = Vec::with_capacity(pulse_times.len());
    for ((&t, &p), seg) in pulse_times.iter().zip(&indices).zip(&rec.segments) {
        let c = rec
            .pulse_reading(t, reach)
            .ok_or_else(|| Error::DetectorResponse(format!("no candidate near pulse at {t} s")))?;
        if seg.is_empty() {
            return Err(Error::DetectorResponse(format!(
                "pulse at {t} s too close to the trace edge"
            )));
        }
        readings.push(c.amplitude);
        offsets.push((c.time * fs).round() as i64 - p);
        segments.push(seg.clone());
    }
    let template = build_template(&segments, &osc)?;
    let gofs: Vec<f64> = segments
        .iter()
        .zip(&readings)
        .zip(&offsets)
        .map(|((seg, &a), &off)| {
            let i = (half as i64 + off).clamp(0, seg.len() as i64 - 1) as usize;
            goodness_of_fit(seg, i, a, &template, geom.gof_half, filter_sigma)
        })
        .collect();
    let gof_threshold = gof_threshold(&gofs, settings.gof_quantile)?;
    Ok(CalibrationOutcome {
        template,
        gof_threshold,
        readings,
        gofs,
        filter_sigma,
    })
}

/// Cut outcomes and the resulting spectrum for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetAnalysis {
    pub reconstruction: Reconstruction,
    pub noise: CutStats,
    pub stability: CutStats,
    pub gof: CutStats,
    pub live: LiveTime,
    /// Reconstructed in-situ calibration pulse amplitudes, keV/c.
    pub calibration_amplitudes: Vec<f64>,
    pub spectrum: BinnedSpectrum,
}

impl DatasetAnalysis {
    /// Spread of the in-situ calibration pulses, keV/c.
    pub fn calibration_sigma(&self) -> Option<f64> {
        (self.calibration_amplitudes.len() >= 2)
            .then(|| crate::numeric::std_dev(&self.calibration_amplitudes))
    }
}

/// Reconstruction, veto, cuts and binning of a dataset.
pub fn analyze_dataset(
    source: &mut dyn ReadoutSource,
    filter: &MatchedFilter,
    template: &Template,
    gof_cut: f64,
    edges: &[f64],
    settings: &ReconSettings,
) -> Result<DatasetAnalysis> {
    let schedule = source.calibration_schedule().to_vec();
    let monitor = source.monitor_power().to_vec();
    let mut rec = reconstruct(source, filter, Some(template), settings, &[], 0)?;
    let calibration_amplitudes = veto_calibration(
        &mut rec.candidates,
        &schedule,
        settings.search_window,
        settings.veto_reach,
        settings.calibration_min_amplitude,
    )?;
    let noise = apply_noise_cut(&mut rec.candidates, settings.noise_cut_sigma);
    let stability = apply_stability_cut(
        &mut rec.candidates,
        &monitor,
        rec.n_windows,
        settings.stability_cut_sigma,
    )?;
    let gof = apply_gof_cut(&mut rec.candidates, gof_cut, settings.gof_min_amplitude);
    let live = live_time(&rec.candidates, rec.n_windows, settings.search_window);
    let mut spectrum = bin_events(&rec.candidates, edges, live.live)?;
    spectrum.meta.raw_time = live.raw;
    spectrum.meta.calibration_sigma = (calibration_amplitudes.len() >= 2)
        .then(|| crate::numeric::std_dev(&calibration_amplitudes));
    spectrum
        .meta
        .cuts
        .insert("noise_fraction".into(), noise.fraction());
    spectrum
        .meta
        .cuts
        .insert("stability_fraction".into(), stability.fraction());
    spectrum
        .meta
        .cuts
        .insert("gof_fraction".into(), gof.fraction());
    spectrum.meta.cuts.insert(
        "live_fraction".into(),
        live.live / live.raw.max(f64::MIN_POSITIVE),
    );
    Ok(DatasetAnalysis {
        reconstruction: rec,
        noise,
        stability,
        gof,
        live,
        calibration_amplitudes,
        spectrum,
    })
}

/// Event list as CSV: `time_s,amplitude_kevc,gof,flags`.
pub fn write_events_csv(path: &Path, candidates: &[EventCandidate]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# schema_version={}", crate::schema::VERSION)?;
    writeln!(w, "time_s,amplitude_kevc,gof,flags")?;
    for c in candidates {
        writeln!(w, "{},{},{},{}", c.time, c.amplitude, c.gof, c.flags.bits())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an event list; search-window indices are recomputed from times and
/// the RMS column is not stored.
pub fn read_events_csv(path: &Path, search_window: f64) -> Result<Vec<EventCandidate>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    let mut saw_version = false;
    for line in r.lines() {
        let line = line?;
        if let Some(v) = line.strip_prefix("# schema_version=") {
            crate::schema::check(v)?;
            saw_version = true;
            continue;
        }
        if line.starts_with("time_s") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("bad event row `{line}`")));
        }
        let f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("`{s}`: {e}")))
        };
        let time = f(cols[0])?;
        let amplitude = f(cols[1])?;
        out.push(EventCandidate {
            time,
            amplitude,
            abs_amplitude: amplitude.abs(),
            gof: f(cols[2])?,
            rms: f64::NAN,
            window: (time / search_window).floor() as usize,
            flags: CutFlags::from_bits(
                cols[3]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("flags: {e}")))?,
            ),
        });
    }
    if !saw_version {
        return Err(Error::Format(
            "event file lacks a schema_version line".into(),
        ));
    }
    Ok(out)
}
