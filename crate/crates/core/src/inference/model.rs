//! Binned signal-plus-background model shared across datasets of one gas.

use super::nb::{nb_log_pmf, DEFAULT_OVERDISPERSION};
use crate::error::{Error, Result};
use crate::kinetics::{GaussianBackground, ResponseTable};
use crate::recon::{BinnedSpectrum, ANALYSIS_THRESHOLD};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    /// mbar.
    pub pressure: f64,
    /// keV/c.
    pub sigma_q: f64,
    /// Background events per second above threshold.
    pub bg_amplitude: f64,
    /// keV/c.
    pub bg_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    /// K.
    pub surface_temperature: f64,
    pub datasets: Vec<DatasetParams>,
}

impl ModelParams {
    pub const SHARED: usize = 2;
    pub const PER_DATASET: usize = 4;

    pub fn dim(&self) -> usize {
        Self::SHARED + Self::PER_DATASET * self.datasets.len()
    }

    /// Layout `[alpha, T_s, (P, sigma_q, bg_amplitude, bg_mean) per dataset]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.alpha, self.surface_temperature];
        for d in &self.datasets {
            v.extend([d.pressure, d.sigma_q, d.bg_amplitude, d.bg_mean]);
        }
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < Self::SHARED + Self::PER_DATASET
            || (v.len() - Self::SHARED) % Self::PER_DATASET != 0
        {
            return Err(Error::Domain(format!(
                "parameter vector of length {} has no dataset layout",
                v.len()
            )));
        }
        Ok(ModelParams {
            alpha: v[0],
            surface_temperature: v[1],
            datasets: v[Self::SHARED..]
                .chunks(Self::PER_DATASET)
                .map(|c| DatasetParams {
                    pressure: c[0],
                    sigma_q: c[1],
                    bg_amplitude: c[2],
                    bg_mean: c[3],
                })
                .collect(),
        })
    }

    pub fn names(n_datasets: usize) -> Vec<String> {
        let mut v = vec!["alpha".to_string(), "surface_temperature".to_string()];
        for i in 0..n_datasets {
            for p in ["pressure", "sigma_q", "bg_amplitude", "bg_mean"] {
                v.push(format!("{p}_{i}"));
            }
        }
        v
    }
}

/// How the total number of events enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodForm {
    /// Independent counts per bin; the total is Poisson-like around the
    /// summed expectation.
    #[default]
    Extended,
    /// Conditioned on the observed total; only the spectral shape enters.
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub overdispersion: f64,
    /// Width of the sigma_q constraint as a fraction of the calibrated value.
    pub sigma_constraint: f64,
    /// keV/c.
    pub threshold: f64,
    pub form: LikelihoodForm,
    /// mbar.
    pub pressure_range: (f64, f64),
    /// keV/c.
    pub bg_mean_range: (f64, f64),
    /// s^-1.
    pub bg_amplitude_max: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            overdispersion: DEFAULT_OVERDISPERSION,
            sigma_constraint: 0.1,
            threshold: ANALYSIS_THRESHOLD,
            form: LikelihoodForm::Extended,
            pressure_range: (1e-13, 1e-4),
            bg_mean_range: (-300.0, 300.0),
            bg_amplitude_max: 1e6,
        }
    }
}

/// A spectrum together with the sigma_q measured on its calibration pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDataset {
    pub spectrum: BinnedSpectrum,
    /// keV/c.
    pub sigma_cal: f64,
}

pub struct JointModel {
    table: Arc<ResponseTable>,
    datasets: Vec<FitDataset>,
    settings: ModelSettings,
}

impl JointModel {
    pub fn new(
        table: Arc<ResponseTable>,
        datasets: Vec<FitDataset>,
        settings: ModelSettings,
    ) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Config(
                "a joint fit needs at least one dataset".into(),
            ));
        }
        for d in &datasets {
            d.spectrum.validate()?;
            if d.spectrum.bin_edges != table.edges() {
                return Err(Error::Config(format!(
                    "dataset `{}` is binned differently from the response table",
                    d.spectrum.meta.dataset_id
                )));
            }
            if d.spectrum.bin_edges[0] < settings.threshold {
                return Err(Error::Config(
                    "spectrum bins must lie above the analysis threshold".into(),
                ));
            }
            if !(d.sigma_cal > 0.0) {
                return Err(Error::Config(format!(
                    "calibrated sigma_q must be positive, got {}",
                    d.sigma_cal
                )));
            }
        }
        Ok(JointModel {
            table,
            datasets,
            settings,
        })
    }

    pub fn table(&self) -> &ResponseTable {
        &self.table
    }

    pub fn datasets(&self) -> &[FitDataset] {
        &self.datasets
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn dim(&self) -> usize {
        ModelParams::SHARED + ModelParams::PER_DATASET * self.datasets.len()
    }

    /// Box bounds per parameter in the vector layout of [`ModelParams`].
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let s = &self.settings;
        let (sig_lo, sig_hi) = self.table.sigma_range();
        let (ts_lo, ts_hi) = self.table.ts_range();
        let mut lo = vec![0.0, ts_lo];
        let mut hi = vec![1.0, ts_hi];
        for _ in &self.datasets {
            lo.extend([s.pressure_range.0, sig_lo, 0.0, s.bg_mean_range.0]);
            hi.extend([
                s.pressure_range.1,
                sig_hi,
                s.bg_amplitude_max,
                s.bg_mean_range.1,
            ]);
        }
        (lo, hi)
    }

    pub fn in_bounds(&self, v: &[f64]) -> bool {
        let (lo, hi) = self.bounds();
        v.len() == lo.len()
            && v.iter()
                .zip(lo.iter().zip(&hi))
                .all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    fn background(&self, d: &DatasetParams) -> GaussianBackground {
        GaussianBackground {
            rate: d.bg_amplitude,
            mean: d.bg_mean,
            sigma: d.sigma_q,
            threshold: self.settings.threshold,
        }
    }

    /// Expected signal and background counts per bin of dataset `i`.
    pub fn expected_components(
        &self,
        i: usize,
        params: &ModelParams,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let ds = self
            .datasets
            .get(i)
            .ok_or_else(|| Error::Domain(format!("no dataset {i}")))?;
        let d = params
            .datasets
            .get(i)
            .ok_or_else(|| Error::Domain(format!("parameters for dataset {i} missing")))?;
        let live = ds.spectrum.live_time;
        let mut signal = vec![0.0; self.table.n_bins()];
        self.table.signal_rates(
            params.alpha,
            params.surface_temperature,
            d.pressure,
            d.sigma_q,
            &mut signal,
        )?;
        signal.iter_mut().for_each(|s| *s *= live);
        let bg = self.background(d).counts(&ds.spectrum.bin_edges, live);
        Ok((signal, bg))
    }

    pub fn expected_counts(&self, i: usize, params: &ModelParams) -> Result<Vec<f64>> {
        let (s, b) = self.expected_components(i, params)?;
        Ok(s.iter().zip(&b).map(|(s, b)| s + b).collect())
    }

    pub fn dataset_log_likelihood(&self, i: usize, params: &ModelParams) -> Result<f64> {
        let mu = self.expected_counts(i, params)?;
        let counts = &self.datasets[i].spectrum.counts;
        if let Some(b) = mu.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::Domain(format!(
                "expected count {} in bin {b} is not positive",
                mu[b]
            )));
        }
        let delta = self.settings.overdispersion;
        match self.settings.form {
            LikelihoodForm::Extended => counts
                .iter()
                .zip(&mu)
                .map(|(&k, &m)| nb_log_pmf(k, m, delta))
                .sum(),
            LikelihoodForm::Multinomial => {
                let total: f64 = mu.iter().sum();
                let n: u64 = counts.iter().sum();
                let mut ll = ln_gamma(n as f64 + 1.0);
                for (&k, &m) in counts.iter().zip(&mu) {
                    ll += k as f64 * (m / total).ln() - ln_gamma(k as f64 + 1.0);
                }
                Ok(ll)
            }
        }
    }

    /// Gaussian log-density of `sigma_q` around the calibrated value, without
    /// its normalization constant.
    pub fn constraint_log_density(&self, i: usize, sigma_q: f64) -> f64 {
        let c = self.datasets[i].sigma_cal;
        let z = (sigma_q - c) / (self.settings.sigma_constraint * c);
        -0.5 * z * z
    }

    /// Sum of dataset likelihoods and sigma_q constraints; `-inf` outside the
    /// prior bounds or where the model is undefined.
    pub fn joint_log_posterior(&self, params: &ModelParams) -> f64 {
        if params.datasets.len() != self.datasets.len() || !self.in_bounds(&params.to_vec()) {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (i, d) in params.datasets.iter().enumerate() {
            match self.dataset_log_likelihood(i, params) {
                Ok(ll) if ll.is_finite() => total += ll + self.constraint_log_density(i, d.sigma_q),
                _ => return f64::NEG_INFINITY,
            }
        }
        total
    }

    pub fn log_posterior(&self, v: &[f64]) -> f64 {
        if v.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        match ModelParams::from_slice(v) {
            Ok(p) => self.joint_log_posterior(&p),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Starting point from the observed spectra: background normalized to the
    /// counts in the first bins, pressure from the given guesses.
    pub fn initial_guess(
        &self,
        alpha: f64,
        surface_temperature: f64,
        pressures: &[f64],
    ) -> Result<ModelParams> {
        if pressures.len() != self.datasets.len() {
            return Err(Error::Config(format!(
                "{} pressure guesses for {} datasets",
                pressures.len(),
                self.datasets.len()
            )));
        }
        let (sig_lo, sig_hi) = self.table.sigma_range();
        let datasets = self
            .datasets
            .iter()
            .zip(pressures)
            .map(|(d, &p)| {
                let live = d.spectrum.live_time.max(f64::MIN_POSITIVE);
                let low: u64 = d.spectrum.counts.iter().take(4).sum();
                DatasetParams {
                    pressure: p.clamp(
                        self.settings.pressure_range.0,
                        self.settings.pressure_range.1,
                    ),
                    sigma_q: d.sigma_cal.clamp(sig_lo, sig_hi),
                    bg_amplitude: (low as f64 / live).max(1.0),
                    bg_mean: 0.5 * self.settings.threshold,
                }
            })
            .collect();
        Ok(ModelParams {
            alpha: alpha.clamp(0.0, 1.0),
            surface_temperature: surface_temperature.max(self.table.ts_range().0),
            datasets,
        })
    }
}
