//! Plot-ready tables: per-dataset rates with model and residuals, a fine
//! model curve, and fitted versus gauge pressures.

use super::run::{DatasetReport, FitReport};
use crate::error::{Error, Result};
use crate::inference::{DatasetParams, ModelParams};
use crate::kinetics::{
    expected_counts, smeared_spectrum, Environment, GasSpecies, GaussianBackground, SpectrumParams,
    SphereSurface,
};
use crate::numeric::ln_normal_sf;
use crate::recon::BinnedSpectrum;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Largest spacing of the model curve, keV/c.
const CURVE_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// keV/c.
    pub lo: f64,
    pub hi: f64,
    pub counts: u64,
    /// s^-1 (keV/c)^-1.
    pub rate: f64,
    pub rate_err: f64,
    /// Expected counts; absent for datasets left out of the fit.
    pub model_signal: Option<f64>,
    pub model_background: Option<f64>,
    pub model_total: Option<f64>,
    pub model_rate: Option<f64>,
    /// (counts - expected) / sqrt(expected (1 + overdispersion)).
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// keV/c.
    pub q: f64,
    /// Expected counts per keV/c over the live time.
    pub signal: f64,
    pub background: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    pub dataset_id: String,
    pub rows: Vec<RateRow>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub dataset_id: String,
    /// mbar.
    pub gauge: f64,
    pub fit_lo: f64,
    pub fit_median: f64,
    pub fit_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureTable {
    pub gas: String,
    pub points: Vec<PressurePoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub datasets: Vec<DatasetTable>,
    pub pressures: Vec<PressureTable>,
}

/// Fitted model of one dataset: shared parameters plus its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetModel {
    pub alpha: f64,
    pub surface_temperature: f64,
    pub params: DatasetParams,
    pub threshold: f64,
    pub overdispersion: f64,
}

impl DatasetModel {
    pub fn from_fit(
        map: &ModelParams,
        i: usize,
        threshold: f64,
        overdispersion: f64,
    ) -> Option<Self> {
        map.datasets.get(i).map(|d| DatasetModel {
            alpha: map.alpha,
            surface_temperature: map.surface_temperature,
            params: *d,
            threshold,
            overdispersion,
        })
    }

    fn spectrum_params(&self, gas: &GasSpecies) -> SpectrumParams {
        SpectrumParams {
            gas: gas.clone(),
            env: Environment::at_pressure(self.params.pressure),
            sphere: SphereSurface::nominal(self.surface_temperature, self.alpha),
            sigma_q: self.params.sigma_q,
        }
    }

    fn background(&self) -> GaussianBackground {
        GaussianBackground {
            rate: self.params.bg_amplitude,
            mean: self.params.bg_mean,
            sigma: self.params.sigma_q,
            threshold: self.threshold,
        }
    }

    /// Expected (signal, background) counts per bin.
    pub fn bin_counts(
        &self,
        gas: &GasSpecies,
        edges: &[f64],
        live_time: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let signal = expected_counts(&self.spectrum_params(gas), edges, live_time, None)?;
        Ok((signal, self.background().counts(edges, live_time)))
    }
}

/// Rates, model and residuals per bin. A spectrum without live time gives
/// no rows.
pub fn dataset_table(
    spectrum: &BinnedSpectrum,
    gas: &GasSpecies,
    model: Option<&DatasetModel>,
) -> Result<DatasetTable> {
    let mut table = DatasetTable {
        dataset_id: spectrum.meta.dataset_id.clone(),
        rows: Vec::new(),
        curve: Vec::new(),
    };
    let live = spectrum.live_time;
    if !(live > 0.0) || spectrum.n_bins() == 0 {
        return Ok(table);
    }
    let edges = &spectrum.bin_edges;
    let expected = model.map(|m| m.bin_counts(gas, edges, live)).transpose()?;
    for (b, w) in edges.windows(2).enumerate() {
        let k = spectrum.counts[b];
        let norm = live * (w[1] - w[0]);
        let mut row = RateRow {
            lo: w[0],
            hi: w[1],
            counts: k,
            rate: k as f64 / norm,
            rate_err: (k as f64).sqrt() / norm,
            model_signal: None,
            model_background: None,
            model_total: None,
            model_rate: None,
            residual: None,
        };
        if let (Some((s, bg)), Some(m)) = (&expected, model) {
            let mu = s[b] + bg[b];
            row.model_signal = Some(s[b]);
            row.model_background = Some(bg[b]);
            row.model_total = Some(mu);
            row.model_rate = Some(mu / norm);
            row.residual = Some((k as f64 - mu) / (mu * (1.0 + m.overdispersion)).sqrt());
        }
        table.rows.push(row);
    }
    if let Some(m) = model {
        table.curve = model_curve(m, gas, edges, live)?;
    }
    Ok(table)
}

/// Expected counts density on a grid at most 1 keV/c apart that contains
/// every bin edge.
pub fn model_curve(
    model: &DatasetModel,
    gas: &GasSpecies,
    edges: &[f64],
    live_time: f64,
) -> Result<Vec<CurvePoint>> {
    let mut grid = vec![edges[0]];
    for w in edges.windows(2) {
        let n = ((w[1] - w[0]) / CURVE_STEP).ceil().max(1.0) as usize;
        grid.extend((1..=n).map(|j| w[0] + (w[1] - w[0]) * j as f64 / n as f64));
    }
    let signal = smeared_spectrum(&model.spectrum_params(gas), &grid)?;
    let bg = model.background();
    let z0 = (bg.threshold - bg.mean) / bg.sigma;
    let norm = bg.rate / (bg.sigma * ln_normal_sf(z0).exp());
    Ok(grid
        .iter()
        .zip(&signal.density)
        .map(|(&q, &s)| {
            let b = if q >= bg.threshold {
                let z = (q - bg.mean) / bg.sigma;
                norm * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                q,
                signal: s * live_time,
                background: b * live_time,
                total: (s + b) * live_time,
            }
        })
        .collect())
}

/// Trapezoid integral of the curve's total between `lo` and `hi`.
pub fn integrate_curve(curve: &[CurvePoint], lo: f64, hi: f64) -> f64 {
    curve
        .windows(2)
        .filter(|w| w[0].q >= lo && w[1].q <= hi)
        .map(|w| 0.5 * (w[1].q - w[0].q) * (w[0].total + w[1].total))
        .sum()
}

/// Builds every figure table from completed run results.
pub fn figure_data(
    gas: &GasSpecies,
    threshold: f64,
    overdispersion: f64,
    datasets: &[DatasetReport],
    spectra: &[BinnedSpectrum],
    fit: Option<&FitReport>,
) -> Result<FigureData> {
    if datasets.len() != spectra.len() {
        return Err(Error::Misaligned(format!(
            "{} dataset reports for {} spectra",
            datasets.len(),
            spectra.len()
        )));
    }
    let mut out = FigureData::default();
    for s in spectra {
        let model = fit.and_then(|f| {
            let i = f.included.iter().position(|id| *id == s.meta.dataset_id)?;
            DatasetModel::from_fit(&f.map, i, threshold, overdispersion)
        });
        out.datasets.push(dataset_table(s, gas, model.as_ref())?);
    }
    if let Some(f) = fit {
        let points = f
            .summary
            .datasets
            .iter()
            .filter_map(|d| {
                let r = datasets.iter().find(|r| r.dataset_id == d.dataset_id)?;
                Some(PressurePoint {
                    dataset_id: d.dataset_id.clone(),
                    gauge: r.gauge_reading,
                    fit_lo: d.pressure.lo,
                    fit_median: d.pressure.median,
                    fit_hi: d.pressure.hi,
                })
            })
            .collect();
        out.pressures.push(PressureTable {
            gas: gas.name.clone(),
            points,
        });
    }
    Ok(out)
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# schema_version={}", crate::schema::VERSION)?;
    Ok(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RATE_HEADER: &str = "lo_kevc,hi_kevc,counts,rate,rate_err,model_signal,model_background,model_total,model_rate,residual";

/// Writes one rates table and one model curve per dataset, one pressure
/// table per gas and `figures.json`. Returns the paths written.
pub fn write_figure_data(figures: &FigureData, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &figures.datasets {
        let path = dir.join(format!("{}_rates.csv", t.dataset_id));
        let mut w = csv_writer(&path)?;
        writeln!(w, "{RATE_HEADER}")?;
        for r in &t.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.lo,
                r.hi,
                r.counts,
                r.rate,
                r.rate_err,
                opt(r.model_signal),
                opt(r.model_background),
                opt(r.model_total),
                opt(r.model_rate),
                opt(r.residual)
            )?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{}_model.csv", t.dataset_id));
        let mut w = csv_writer(&path)?;
        writeln!(w, "q_kevc,signal,background,total")?;
        for p in &t.curve {
            writeln!(w, "{},{},{},{}", p.q, p.signal, p.background, p.total)?;
        }
        w.flush()?;
        written.push(path);
    }
    for t in &figures.pressures {
        let path = dir.join(format!("{}_pressures.csv", t.gas));
        let mut w = csv_writer(&path)?;
        writeln!(
            w,
            "dataset_id,gauge_mbar,fit_lo_mbar,fit_median_mbar,fit_hi_mbar"
        )?;
        for p in &t.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.dataset_id, p.gauge, p.fit_lo, p.fit_median, p.fit_hi
            )?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join("figures.json");
    super::io::write_json(&path, figures)?;
    written.push(path);
    Ok(written)
}
