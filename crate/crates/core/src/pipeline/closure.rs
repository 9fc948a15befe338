//! Repeated-trial coverage study on simulated binned spectra.
//!
//! Each trial draws counts from the joint model at known parameters, draws a
//! calibration resolution with the constraint's spread, and runs the full
//! MAP plus MCMC fit. Trace-level simulation is skipped: the reconstruction
//! chain is validated separately and dominates the cost.

use super::config::{nominal_alpha, RunConfig};
use super::run::response_table;
use crate::error::{Error, Result};
use crate::inference::{
    fit_map, run_mcmc, sample_counts, summarize, DatasetParams, FitDataset, JointModel,
    ModelParams, NelderMeadSettings,
};
use crate::kinetics::{GasSpecies, ResponseTable};
use crate::recon::{BinnedSpectrum, SpectrumMeta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub alpha_lo: f64,
    pub alpha_median: f64,
    pub alpha_hi: f64,
    pub ts_ul_95: f64,
    pub alpha_covered: bool,
    pub ts_covered: bool,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
    /// Set when the fit itself failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasCoverage {
    pub gas: String,
    pub alpha_truth: f64,
    pub ts_truth: f64,
    pub trials: Vec<TrialOutcome>,
    /// Fraction of completed trials whose 68% alpha interval holds the truth.
    pub alpha_coverage: f64,
    /// Fraction of completed trials whose 95% T_s limit lies above the truth.
    pub ts_coverage: f64,
    pub completed: usize,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub schema_version: String,
    pub config_hash: String,
    pub gases: Vec<GasCoverage>,
}

fn empty_spectrum(edges: &[f64], live: f64, id: String) -> BinnedSpectrum {
    BinnedSpectrum {
        bin_edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        live_time: live,
        meta: SpectrumMeta {
            dataset_id: id,
            ..SpectrumMeta::default()
        },
    }
}

/// Truth parameters of a closure trial for `gas`.
pub fn closure_truth(config: &RunConfig, gas: &GasSpecies) -> Result<ModelParams> {
    Ok(ModelParams {
        alpha: nominal_alpha(&gas.name)?,
        surface_temperature: config.surface_temperature,
        datasets: config
            .pressures
            .iter()
            .map(|&p| DatasetParams {
                pressure: p,
                sigma_q: config.sigma_q,
                bg_amplitude: config.closure.bg_rate,
                bg_mean: config.closure.bg_mean,
            })
            .collect(),
    })
}

/// Runs one trial with its own seed.
pub fn closure_trial(
    config: &RunConfig,
    table: &Arc<ResponseTable>,
    truth: &ModelParams,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let settings = super::run::model_settings(config);
    let live = config.closure.live_time;
    let edges = &config.bin_edges;
    let ids: Vec<String> = (0..truth.datasets.len())
        .map(|i| format!("{}_{i}", table.spec().gas.name))
        .collect();
    let shells = ids
        .iter()
        .map(|id| FitDataset {
            spectrum: empty_spectrum(edges, live, id.clone()),
            sigma_cal: config.sigma_q,
        })
        .collect();
    let generator = JointModel::new(table.clone(), shells, settings.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cal = Normal::new(config.sigma_q, settings.sigma_constraint * config.sigma_q)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let (slo, shi) = table.sigma_range();
    let mut datasets = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let mu = generator.expected_counts(i, truth)?;
        let mut s = empty_spectrum(edges, live, id.clone());
        s.counts = sample_counts(&mu, settings.overdispersion, &mut rng)?;
        datasets.push(FitDataset {
            spectrum: s,
            sigma_cal: cal.sample(&mut rng).clamp(slo, shi),
        });
    }
    let model = JointModel::new(table.clone(), datasets, settings)?;
    let pressures: Vec<f64> = truth.datasets.iter().map(|d| d.pressure).collect();
    let init = model.initial_guess(
        config.fit.alpha_init,
        config.fit.surface_temperature_init,
        &pressures,
    )?;
    let map = fit_map(&model, &init, &NelderMeadSettings::default())?;
    let sampler = crate::inference::McmcSettings {
        seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        ..config.closure.sampler
    };
    let post = run_mcmc(&model, &map.params, &sampler)?;
    let s = summarize(&post, &table.spec().gas.name, &ids)?;
    Ok(TrialOutcome {
        trial,
        alpha_lo: s.alpha_lo,
        alpha_median: s.alpha_med,
        alpha_hi: s.alpha_hi,
        ts_ul_95: s.ts_ul_95,
        alpha_covered: s.alpha().contains(truth.alpha),
        ts_covered: s.ts_ul_95 > truth.surface_temperature,
        converged: s.converged,
        max_rhat: s.max_rhat,
        min_ess: s.min_ess,
        error: None,
    })
}

/// Coverage of `trials` closure fits for one gas.
pub fn gas_coverage(config: &RunConfig, gas: &GasSpecies, trials: usize) -> Result<GasCoverage> {
    let mut c = config.clone();
    c.gas = gas.name.clone();
    let table = response_table(&c, &[c.sigma_q])?;
    let truth = closure_truth(&c, gas)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = c.derive_seed(&format!("closure/{}", gas.name), t as u64);
            closure_trial(&c, &table, &truth, t, seed).unwrap_or_else(|e| {
                log::warn!("closure trial {t} for {} failed: {e}", gas.name);
                TrialOutcome {
                    trial: t,
                    alpha_lo: f64::NAN,
                    alpha_median: f64::NAN,
                    alpha_hi: f64::NAN,
                    ts_ul_95: f64::NAN,
                    alpha_covered: false,
                    ts_covered: false,
                    converged: false,
                    max_rhat: f64::NAN,
                    min_ess: f64::NAN,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    let done: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let frac = |f: fn(&TrialOutcome) -> bool| {
        if done.is_empty() {
            f64::NAN
        } else {
            done.iter().filter(|o| f(o)).count() as f64 / done.len() as f64
        }
    };
    Ok(GasCoverage {
        gas: gas.name.clone(),
        alpha_truth: truth.alpha,
        ts_truth: truth.surface_temperature,
        alpha_coverage: frac(|o| o.alpha_covered),
        ts_coverage: frac(|o| o.ts_covered),
        completed: done.len(),
        converged: done.iter().filter(|o| o.converged).count(),
        trials: outcomes,
    })
}

/// Coverage study over every gas listed in the closure section.
pub fn run_closure(config: &RunConfig) -> Result<ClosureReport> {
    config.validate()?;
    let gases = config
        .closure
        .gases
        .iter()
        .map(|g| {
            GasSpecies::from_name(g).and_then(|g| gas_coverage(config, &g, config.closure.trials))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClosureReport {
        schema_version: crate::schema::VERSION.into(),
        config_hash: config.hash(),
        gases,
    })
}
