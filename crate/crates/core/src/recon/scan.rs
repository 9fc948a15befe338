//! Trigger-free candidate search and per-candidate context statistics.

use super::template::Template;
use super::{CutFlags, EventCandidate};

/// Geometry of the per-candidate context, in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGeometry {
    pub window: usize,
    pub rms_half: usize,
    pub rms_exclude: usize,
    pub gof_half: usize,
}

/// Position of the largest local maximum of |a| inside `lo..hi`. Neighbours
/// outside the range are consulted when present; if |a| is monotone across
/// the range the plain maximum is returned.
pub fn find_extremum(series: &[f64], lo: usize, hi: usize) -> usize {
    let mut best: Option<usize> = None;
    let mut fallback = lo;
    for i in lo..hi {
        let v = series[i].abs();
        if v > series[fallback].abs() {
            fallback = i;
        }
        let left = if i > 0 { series[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < series.len() {
            series[i + 1].abs()
        } else {
            0.0
        };
        if v >= left && v >= right && best.map_or(true, |b| v > series[b].abs()) {
            best = Some(i);
        }
    }
    best.unwrap_or(fallback)
}

/// RMS over `i +- half` excluding `i +- exclude`, clipped to the series.
pub fn surrounding_rms(series: &[f64], i: usize, half: usize, exclude: usize) -> f64 {
    let lo = i.saturating_sub(half);
    let hi = (i + half + 1).min(series.len());
    let (mut s, mut n) = (0.0, 0usize);
    for (j, v) in series.iter().enumerate().take(hi).skip(lo) {
        if j.abs_diff(i) > exclude {
            s += v * v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Normalized squared residual against the amplitude-scaled template.
pub fn goodness_of_fit(
    series: &[f64],
    i: usize,
    amplitude: f64,
    template: &Template,
    half: usize,
    sigma: f64,
) -> f64 {
    if !(sigma > 0.0) {
        return f64::NAN;
    }
    let lo = i.saturating_sub(half);
    let hi = (i + half + 1).min(series.len());
    let mut s = 0.0;
    for (j, v) in series.iter().enumerate().take(hi).skip(lo) {
        let r = v - amplitude * template.at(j as i64 - i as i64);
        s += r * r;
    }
    s / ((hi - lo) as f64 * sigma * sigma)
}

/// One candidate per search window of `series`, which starts at absolute
/// sample `origin`. Windows `first..first + count` (absolute indices) are
/// scanned; the series must cover them.
#[allow(clippy::too_many_arguments)]
pub fn scan_series(
    series: &[f64],
    origin: i64,
    first: usize,
    count: usize,
    sample_rate: f64,
    geom: &ScanGeometry,
    template: Option<&Template>,
    sigma: f64,
) -> Vec<EventCandidate> {
    // Neighbours outside the scanned span belong to another filter view and
    // are ignored, so a peak on a view boundary is not lost.
    let span_lo = ((first * geom.window) as i64 - origin).max(0) as usize;
    let span_hi = (((first + count) * geom.window) as i64 - origin).max(0) as usize;
    let span_hi = span_hi.min(series.len());
    let view = &series[span_lo..span_hi];
    (first..first + count)
        .map(|w| {
            let lo = (w * geom.window) as i64 - origin;
            let lo = lo.max(0) as usize;
            let hi = (lo + geom.window).min(span_hi);
            let i = span_lo + find_extremum(view, lo - span_lo, hi - span_lo);
            let amplitude = series[i];
            let gof = template.map_or(f64::NAN, |t| {
                goodness_of_fit(series, i, amplitude, t, geom.gof_half, sigma)
            });
            EventCandidate {
                time: (origin + i as i64) as f64 / sample_rate,
                amplitude,
                abs_amplitude: amplitude.abs(),
                gof,
                rms: surrounding_rms(series, i, geom.rms_half, geom.rms_exclude),
                window: w,
                flags: CutFlags::default(),
            }
        })
        .collect()
}

/// One candidate per `search_window` seconds of a stand-alone amplitude
/// series starting at t = 0.
pub fn scan_events(series: &[f64], sample_rate: f64, search_window: f64) -> Vec<EventCandidate> {
    let window = (search_window * sample_rate).round() as usize;
    let geom = ScanGeometry {
        window,
        rms_half: (125e-6 * sample_rate).round() as usize,
        rms_exclude: 0,
        gof_half: 0,
    };
    scan_series(
        series,
        0,
        0,
        series.len() / window.max(1),
        sample_rate,
        &geom,
        None,
        f64::NAN,
    )
}
