//! Background-only fits, the smallest pressure a dataset can exclude, and
//! fits with the signal held fixed.

use super::model::{DatasetParams, FitDataset, JointModel, ModelParams, ModelSettings};
use super::nb::nb_tail_significance;
use super::optimize::{minimize_bounded, NelderMeadSettings};
use crate::error::Result;
use crate::kinetics::{GaussianBackground, ResponseTable};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySettings {
    /// Signal shape used for the pressure profile.
    pub alpha: f64,
    /// K.
    pub surface_temperature: f64,
    /// Profile grid, mbar.
    pub pressure_min: f64,
    pub pressure_max: f64,
    pub grid_points: usize,
    /// One-sided 95% threshold on -2 ln(likelihood ratio).
    pub critical_value: f64,
    pub optimizer: NelderMeadSettings,
}

impl Default for SensitivitySettings {
    fn default() -> Self {
        SensitivitySettings {
            alpha: 0.6,
            surface_temperature: 293.0,
            pressure_min: 1e-11,
            pressure_max: 1e-6,
            grid_points: 61,
            critical_value: 2.71,
            optimizer: NelderMeadSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    /// mbar.
    pub pressure: f64,
    pub log_likelihood: f64,
    /// -2 ln(L / L_best).
    pub delta_chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFit {
    pub background: GaussianBackground,
    pub sigma_q: f64,
    /// Constrained log-likelihood of the Gaussian-only model.
    pub log_likelihood: f64,
    /// Profile maximum over the pressure grid, mbar.
    pub best_pressure: f64,
    /// -2 ln(L_background / L_best); large values reject background only.
    pub lr_statistic: f64,
    pub background_rejected: bool,
    /// Smallest pressure above the best fit excluded at 95%, mbar. Infinite
    /// when nothing on the grid is excluded.
    pub floor_pressure: f64,
    pub profile: Vec<ProfilePoint>,
}

/// Maximizes the constrained likelihood of dataset 0 over (sigma_q,
/// bg_amplitude, bg_mean) with the signal fixed. Returns the optimum and its
/// log-likelihood.
fn refit_nuisances(
    model: &JointModel,
    alpha: f64,
    surface_temperature: f64,
    pressure: f64,
    x0: &[f64],
    optimizer: &NelderMeadSettings,
) -> Result<(Vec<f64>, f64)> {
    let (lo, hi) = model.bounds();
    let s = ModelParams::SHARED;
    let (lo, hi) = (&lo[s + 1..], &hi[s + 1..]);
    let f = |x: &[f64]| {
        let p = ModelParams {
            alpha,
            surface_temperature,
            datasets: vec![DatasetParams {
                pressure,
                sigma_q: x[0],
                bg_amplitude: x[1],
                bg_mean: x[2],
            }],
        };
        match model.dataset_log_likelihood(0, &p) {
            Ok(ll) if ll.is_finite() => -(ll + model.constraint_log_density(0, x[0])),
            _ => f64::INFINITY,
        }
    };
    let steps = [3.0, 0.1 * x0[1].max(1.0), 10.0];
    let m = minimize_bounded(f, x0, lo, hi, &steps, optimizer)?;
    Ok((m.x, -m.f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSignalFit {
    pub params: DatasetParams,
    pub log_likelihood: f64,
    pub expected: Vec<f64>,
    /// (counts - expected) / sqrt(expected (1 + overdispersion)) per bin.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// Per-bin NB tail significance, see [`nb_tail_significance`].
    pub significance: Vec<f64>,
    pub max_abs_significance: f64,
}

/// Holds the single-collision signal at (alpha, T_s, pressure) and refits
/// only resolution and background. Large residuals mean the spectrum is not
/// described by the single-collision model at the known pressure.
pub fn fixed_signal_fit(
    table: Arc<ResponseTable>,
    dataset: FitDataset,
    model_settings: ModelSettings,
    alpha: f64,
    surface_temperature: f64,
    pressure: f64,
    optimizer: &NelderMeadSettings,
) -> Result<FixedSignalFit> {
    let model = JointModel::new(table, vec![dataset], model_settings)?;
    let d0 = model
        .initial_guess(alpha, surface_temperature, &[pressure])?
        .datasets[0];
    let (x, ll) = refit_nuisances(
        &model,
        alpha,
        surface_temperature,
        pressure,
        &[d0.sigma_q, d0.bg_amplitude, d0.bg_mean],
        optimizer,
    )?;
    let params = DatasetParams {
        pressure,
        sigma_q: x[0],
        bg_amplitude: x[1],
        bg_mean: x[2],
    };
    let full = ModelParams {
        alpha,
        surface_temperature,
        datasets: vec![params],
    };
    let expected = model.expected_counts(0, &full)?;
    let delta = model_settings.overdispersion;
    let residuals: Vec<f64> = model.datasets()[0]
        .spectrum
        .counts
        .iter()
        .zip(&expected)
        .map(|(&k, &mu)| (k as f64 - mu) / (mu * (1.0 + delta)).sqrt())
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let significance = model.datasets()[0]
        .spectrum
        .counts
        .iter()
        .zip(&expected)
        .map(|(&k, &mu)| nb_tail_significance(k, mu, delta))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_significance = significance.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    Ok(FixedSignalFit {
        significance,
        max_abs_significance,
        params,
        log_likelihood: ll,
        expected,
        residuals,
        max_abs_residual,
    })
}

/// Fits the Gaussian background alone, then profiles the signal pressure on
/// a log grid with the background refitted at every point.
pub fn background_only_fit(
    table: Arc<ResponseTable>,
    dataset: FitDataset,
    model_settings: ModelSettings,
    settings: &SensitivitySettings,
) -> Result<BackgroundFit> {
    let model = JointModel::new(table, vec![dataset], model_settings)?;
    let start = model.initial_guess(
        settings.alpha,
        settings.surface_temperature,
        &[model_settings.pressure_range.0],
    )?;
    let d0 = start.datasets[0];

    let profile_at = |pressure: f64, x0: &[f64]| {
        refit_nuisances(
            &model,
            settings.alpha,
            settings.surface_temperature,
            pressure,
            x0,
            &settings.optimizer,
        )
    };

    let (bg_x, bg_ll) = profile_at(0.0, &[d0.sigma_q, d0.bg_amplitude, d0.bg_mean])?;
    let n = settings.grid_points.max(2);
    let ratio = (settings.pressure_max / settings.pressure_min).ln();
    let mut x = bg_x.clone();
    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let p = settings.pressure_min * (ratio * k as f64 / (n - 1) as f64).exp();
        let (nx, ll) = profile_at(p, &x)?;
        x = nx;
        points.push((p, ll));
    }
    let (best_p, best_ll) = points
        .iter()
        .copied()
        .chain(std::iter::once((0.0, bg_ll)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let profile: Vec<ProfilePoint> = points
        .iter()
        .map(|&(pressure, ll)| ProfilePoint {
            pressure,
            log_likelihood: ll,
            delta_chi2: 2.0 * (best_ll - ll),
        })
        .collect();

    let mut floor = f64::INFINITY;
    for w in profile.windows(2) {
        if w[1].pressure <= best_p || w[1].delta_chi2 < settings.critical_value {
            continue;
        }
        let (a, b) = (&w[0], &w[1]);
        floor = if a.pressure <= best_p || a.delta_chi2 >= settings.critical_value {
            b.pressure
        } else {
            let t = (settings.critical_value - a.delta_chi2) / (b.delta_chi2 - a.delta_chi2);
            (a.pressure.ln() + t * (b.pressure.ln() - a.pressure.ln())).exp()
        };
        break;
    }
    let lr = 2.0 * (best_ll - bg_ll);
    Ok(BackgroundFit {
        background: GaussianBackground {
            rate: bg_x[1],
            mean: bg_x[2],
            sigma: bg_x[0],
            threshold: model_settings.threshold,
        },
        sigma_q: bg_x[0],
        log_likelihood: bg_ll,
        best_pressure: best_p,
        lr_statistic: lr,
        background_rejected: lr > settings.critical_value,
        floor_pressure: floor,
        profile,
    })
}
