//! Interval summaries and the comparison of fitted pressures with a gauge.

use super::mcmc::Posterior;
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::{quantile_sorted, weighted_line_fit, LineFit};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// 16th percentile.
    pub lo: f64,
    pub median: f64,
    /// 84th percentile.
    pub hi: f64,
}

impl Interval {
    pub fn central68(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Interval {
            lo: quantile_sorted(&v, 0.16),
            median: quantile_sorted(&v, 0.5),
            hi: quantile_sorted(&v, 0.84),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    /// mbar.
    pub pressure: Interval,
    pub sigma_q: Interval,
    pub bg_amplitude: Interval,
    pub bg_mean: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub gas: String,
    pub alpha_lo: f64,
    pub alpha_med: f64,
    pub alpha_hi: f64,
    /// One-sided 95% upper limit on the surface temperature, K.
    pub ts_ul_95: f64,
    pub datasets: Vec<DatasetSummary>,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl PosteriorSummary {
    pub fn alpha(&self) -> Interval {
        Interval {
            lo: self.alpha_lo,
            median: self.alpha_med,
            hi: self.alpha_hi,
        }
    }
}

fn sorted_column(p: &Posterior, j: usize) -> Vec<f64> {
    let mut v = p.column(j);
    v.sort_by(f64::total_cmp);
    v
}

/// Reads the posterior in the [`ModelParams`] layout. `dataset_ids` labels the
/// per-dataset blocks; missing labels fall back to their index.
pub fn summarize(
    posterior: &Posterior,
    gas: &str,
    dataset_ids: &[String],
) -> Result<PosteriorSummary> {
    let d = posterior.dim();
    if d < ModelParams::SHARED || (d - ModelParams::SHARED) % ModelParams::PER_DATASET != 0 {
        return Err(Error::Domain(format!(
            "posterior of dimension {d} has no parameter layout"
        )));
    }
    if posterior.n_samples() == 0 {
        return Err(Error::InsufficientStatistics(
            "posterior holds no samples".into(),
        ));
    }
    let alpha = Interval::central68(&posterior.column(0));
    let ts = sorted_column(posterior, 1);
    let n = (d - ModelParams::SHARED) / ModelParams::PER_DATASET;
    let datasets = (0..n)
        .map(|i| {
            let c = |k: usize| {
                Interval::central68(
                    &posterior.column(ModelParams::SHARED + ModelParams::PER_DATASET * i + k),
                )
            };
            DatasetSummary {
                dataset_id: dataset_ids.get(i).cloned().unwrap_or_else(|| i.to_string()),
                pressure: c(0),
                sigma_q: c(1),
                bg_amplitude: c(2),
                bg_mean: c(3),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        gas: gas.to_string(),
        alpha_lo: alpha.lo,
        alpha_med: alpha.median,
        alpha_hi: alpha.hi,
        ts_ul_95: quantile_sorted(&ts, 0.95),
        datasets,
        converged: posterior.converged,
        max_rhat: posterior.max_rhat(),
        min_ess: posterior.min_ess(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub dataset_id: String,
    /// Marginal posterior median and central 68% interval, mbar.
    pub pressure: Interval,
}

pub fn estimate_pressures(summary: &PosteriorSummary) -> Vec<PressureEstimate> {
    summary
        .datasets
        .iter()
        .map(|d| PressureEstimate {
            dataset_id: d.dataset_id.clone(),
            pressure: d.pressure,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeComparison {
    /// Gauge reading as a line in the fitted pressure.
    pub fit: LineFit,
    /// Gauge reading at zero fitted pressure, mbar.
    pub zero_offset: f64,
    pub zero_offset_err: f64,
}

/// Weighted straight line `gauge = slope * estimate + offset`, weighted by the
/// 68% half-widths of the estimates.
pub fn compare_to_gauge(estimates: &[PressureEstimate], gauge: &[f64]) -> Result<GaugeComparison> {
    if estimates.len() != gauge.len() {
        return Err(Error::Misaligned(format!(
            "{} pressure estimates for {} gauge readings",
            estimates.len(),
            gauge.len()
        )));
    }
    let x: Vec<f64> = estimates.iter().map(|e| e.pressure.median).collect();
    let scale = x
        .iter()
        .chain(gauge)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let sigma: Vec<f64> = estimates
        .iter()
        .map(|e| e.pressure.half_width().max(1e-9 * scale))
        .collect();
    let fit = weighted_line_fit(&x, gauge, &sigma).ok_or_else(|| {
        Error::InsufficientStatistics("gauge comparison needs two distinct pressures".into())
    })?;
    Ok(GaugeComparison {
        fit,
        zero_offset: fit.intercept,
        zero_offset_err: fit.intercept_err,
    })
}
