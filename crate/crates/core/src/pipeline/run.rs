//! End-to-end orchestration: detector calibration, dataset simulation and
//! analysis, joint fit and the run report.

use super::config::{sha256_hex, RunConfig};
use super::figures::{figure_data, write_figure_data, FigureData};
use super::io::{read_versioned_json, write_json, CalibrationArtifact};
use crate::dynsim::{
    calibrate_noise_floor, noise_shape, sample_impulse_train, schedule_calibration_pulses,
    write_trace, write_truth_csv, NoiseFloorSettings, OscillatorConfig, ReadoutSource, TraceFile,
    TraceHeader, TraceSimulator, DEFAULT_FILTER_BANDWIDTH,
};
use crate::error::{Error, Result};
use crate::inference::{
    compare_to_gauge, estimate_pressures, fit_map, run_mcmc, summarize, FitDataset,
    GaugeComparison, JointModel, ModelParams, ModelSettings, NelderMeadSettings, Posterior,
    PosteriorSummary,
};
use crate::kinetics::{
    Environment, ResponseTable, ResponseTableSpec, SpectrumParams, SphereSurface,
};
use crate::numeric::{mean, std_dev};
use crate::recon::{
    analyze_dataset, calibration_sweep, characterize_calibration_run, write_events_csv,
    BinnedSpectrum, DatasetAnalysis, MatchedFilter, ReconSettings,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Offset of dedicated calibration pulses from the search-window grid, s.
const SWEEP_OFFSET: f64 = 25e-6;

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::stage(name, e),
    })
}

/// Sets the noise level and runs the dedicated calibration.
pub fn calibrate_detector(config: &RunConfig) -> Result<CalibrationArtifact> {
    let osc = OscillatorConfig::default();
    let noise = stage(
        "noise",
        match config.noise.readout_density {
            Some(d) => Ok(noise_shape(&osc, DEFAULT_FILTER_BANDWIDTH).scaled(d / 1e-12)),
            None => calibrate_noise_floor(
                &osc,
                config.sigma_q,
                &NoiseFloorSettings {
                    pulses: config.noise.calibration_pulses,
                    seed: config.derive_seed("noise", 0),
                    ..NoiseFloorSettings::default()
                },
            ),
        },
    )?;
    stage("calibration", {
        let settings = ReconSettings::default();
        let c = &config.calibration;
        let train = calibration_sweep(&[c.amplitude], c.pulses, c.spacing, SWEEP_OFFSET);
        let duration = (c.pulses + 1) as f64 * c.spacing;
        (|| {
            let mut sim = TraceSimulator::new(
                &osc,
                &noise,
                &train,
                duration,
                config.derive_seed("calibration", 0),
            )?;
            let filter = MatchedFilter::new(&osc, settings.filter)?;
            let out =
                characterize_calibration_run(&mut sim, &filter, &settings, &train.times(), 0)?;
            Ok(CalibrationArtifact {
                schema_version: crate::schema::VERSION.into(),
                oscillator: osc,
                noise: noise.clone(),
                pulse_sigma: std_dev(&out.readings),
                pulse_mean: mean(&out.readings),
                template: out.template,
                gof_threshold: out.gof_threshold,
                filter_sigma: out.filter_sigma,
            })
        })()
    })
}

pub fn dataset_id(config: &RunConfig, i: usize) -> String {
    format!(
        "{}_{i}",
        config
            .species()
            .map(|g| g.name)
            .unwrap_or_else(|_| config.gas.clone())
    )
}

/// Simulated readout of dataset `i`: gas collisions plus in-situ pulses.
pub fn simulate_dataset(
    config: &RunConfig,
    detector: &CalibrationArtifact,
    i: usize,
) -> Result<TraceSimulator> {
    let params = SpectrumParams {
        gas: config.species()?,
        env: Environment::at_pressure(config.pressures[i]),
        sphere: SphereSurface::nominal(config.surface_temperature, config.alpha),
        sigma_q: config.sigma_q,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.derive_seed("collisions", i as u64));
    let collisions = sample_impulse_train(&params, config.duration, &mut rng)?;
    let pulses = schedule_calibration_pulses(
        config.duration,
        config.calibration.in_situ_period,
        config.calibration.amplitude,
    )?;
    TraceSimulator::new(
        &detector.oscillator,
        &detector.noise,
        &collisions.merge(&pulses),
        config.duration,
        config.derive_seed("trace", i as u64),
    )
}

/// Cuts and bins one dataset with the detector's template and gof threshold.
pub fn analyze_source(
    config: &RunConfig,
    detector: &CalibrationArtifact,
    source: &mut dyn ReadoutSource,
    id: &str,
    nominal_pressure: f64,
) -> Result<DatasetAnalysis> {
    let settings = ReconSettings::default();
    let filter = MatchedFilter::new(&detector.oscillator, settings.filter)?;
    let mut a = analyze_dataset(
        source,
        &filter,
        &detector.template,
        detector.gof_threshold,
        &config.bin_edges,
        &settings,
    )?;
    a.spectrum.meta.dataset_id = id.to_string();
    a.spectrum.meta.gas = config.species()?.name;
    a.spectrum.meta.nominal_pressure = nominal_pressure;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    /// mbar.
    pub nominal_pressure: f64,
    /// mbar.
    pub gauge_reading: f64,
    /// Reason the dataset was left out of the fit.
    pub excluded: Option<String>,
    pub total_counts: u64,
    /// s.
    pub live_time: f64,
    /// s.
    pub raw_time: f64,
    pub cuts: BTreeMap<String, f64>,
    /// keV/c.
    pub calibration_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub included: Vec<String>,
    pub map: ModelParams,
    pub map_log_posterior: f64,
    pub summary: PosteriorSummary,
    pub gauge: Option<GaugeComparison>,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub crate_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub detector: CalibrationArtifact,
    pub datasets: Vec<DatasetReport>,
    pub spectra: Vec<BinnedSpectrum>,
    pub fit: Option<FitReport>,
    pub figures: FigureData,
    /// Wall-clock seconds per stage; excluded from `report_hash`.
    pub timings: BTreeMap<String, f64>,
    /// SHA-256 over everything except timings.
    pub report_hash: String,
}

impl RunReport {
    pub fn compute_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
            o.remove("report_hash");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// Whether the fit ran and passed the sampler diagnostics.
    pub fn diagnostics_passed(&self) -> bool {
        self.fit.as_ref().map_or(true, |f| f.summary.converged)
    }
}

pub fn excluded_reason(config: &RunConfig, pressure: f64) -> Option<String> {
    (pressure > config.pileup_limit && !config.include_pileup).then(|| {
        format!(
            "pile-up: nominal pressure {pressure:.3e} mbar exceeds {:.1e} mbar",
            config.pileup_limit
        )
    })
}

pub struct FitOutcome {
    pub model: JointModel,
    pub posterior: Posterior,
    pub report: FitReport,
}

pub fn model_settings(config: &RunConfig) -> ModelSettings {
    ModelSettings {
        overdispersion: config.fit.overdispersion,
        sigma_constraint: config.fit.sigma_constraint,
        threshold: config.threshold,
        form: config.fit.form,
        ..ModelSettings::default()
    }
}

/// Response table covering the calibrated resolutions of `sigmas`.
pub fn response_table(config: &RunConfig, sigmas: &[f64]) -> Result<Arc<ResponseTable>> {
    let lo = sigmas.iter().copied().fold(config.sigma_q, f64::min);
    let hi = sigmas.iter().copied().fold(config.sigma_q, f64::max);
    Ok(Arc::new(ResponseTable::build(ResponseTableSpec::new(
        config.species()?,
        config.bin_edges.clone(),
        lo,
        hi,
    ))?))
}

/// Joint MAP fit followed by MCMC over `spectra`; `gauge` holds one reading
/// per spectrum.
pub fn fit_spectra(
    config: &RunConfig,
    spectra: &[BinnedSpectrum],
    gauge: &[f64],
) -> Result<FitOutcome> {
    if spectra.is_empty() {
        return Err(Error::Config("no spectra to fit".into()));
    }
    let sigma_cal: Vec<f64> = spectra
        .iter()
        .map(|s| s.meta.calibration_sigma.unwrap_or(config.sigma_q))
        .collect();
    let table = response_table(config, &sigma_cal)?;
    let datasets = spectra
        .iter()
        .zip(&sigma_cal)
        .map(|(s, &c)| FitDataset {
            spectrum: s.clone(),
            sigma_cal: c,
        })
        .collect();
    let model = JointModel::new(table, datasets, model_settings(config))?;
    let guesses: Vec<f64> = spectra
        .iter()
        .zip(gauge)
        .map(|(s, &g)| {
            if s.meta.nominal_pressure > 0.0 {
                s.meta.nominal_pressure
            } else {
                g
            }
        })
        .collect();
    let init = model.initial_guess(
        config.fit.alpha_init,
        config.fit.surface_temperature_init,
        &guesses,
    )?;
    let map = fit_map(&model, &init, &NelderMeadSettings::default())?;
    let sampler = crate::inference::McmcSettings {
        seed: config.derive_seed("mcmc", 0),
        ..config.sampler
    };
    let posterior = run_mcmc(&model, &map.params, &sampler)?;
    let ids: Vec<String> = spectra.iter().map(|s| s.meta.dataset_id.clone()).collect();
    let summary = summarize(&posterior, &model.table().spec().gas.name, &ids)?;
    let gauge_cmp = (spectra.len() >= 2)
        .then(|| compare_to_gauge(&estimate_pressures(&summary), gauge))
        .transpose()?;
    let report = FitReport {
        included: ids,
        map: map.params,
        map_log_posterior: map.log_posterior,
        summary,
        gauge: gauge_cmp,
        acceptance: posterior.acceptance,
    };
    Ok(FitOutcome {
        model,
        posterior,
        report,
    })
}

fn path_in(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    std::fs::write(path_in(&out, "config.toml"), config.to_toml()?)?;
    Ok(out)
}

fn spectrum_stem(out: &Path, id: &str) -> PathBuf {
    path_in(out, &format!("{id}_spectrum"))
}

fn trace_path(out: &Path, id: &str) -> PathBuf {
    path_in(out, &format!("{id}.trace"))
}

pub fn dataset_report(config: &RunConfig, i: usize, s: &BinnedSpectrum) -> DatasetReport {
    DatasetReport {
        dataset_id: s.meta.dataset_id.clone(),
        nominal_pressure: config.pressures[i],
        gauge_reading: config.pressures[i] + config.gauge_offset,
        excluded: excluded_reason(config, config.pressures[i]),
        total_counts: s.total(),
        live_time: s.live_time,
        raw_time: s.meta.raw_time,
        cuts: s.meta.cuts.clone(),
        calibration_sigma: s.meta.calibration_sigma,
    }
}

/// Fits the datasets not excluded for pile-up and writes `posterior.csv`
/// and `summary.json`. Returns `None` when nothing is left to fit.
pub fn fit_included(
    config: &RunConfig,
    datasets: &[DatasetReport],
    spectra: &[BinnedSpectrum],
    out: &Path,
) -> Result<Option<FitReport>> {
    let included: Vec<usize> = (0..datasets.len())
        .filter(|&i| datasets[i].excluded.is_none())
        .collect();
    if included.is_empty() {
        log::warn!("every dataset is excluded; skipping the fit");
        return Ok(None);
    }
    let sub: Vec<BinnedSpectrum> = included.iter().map(|&i| spectra[i].clone()).collect();
    let gauge: Vec<f64> = included
        .iter()
        .map(|&i| datasets[i].gauge_reading)
        .collect();
    let outcome = stage("fit", fit_spectra(config, &sub, &gauge))?;
    outcome
        .posterior
        .write_csv(&path_in(out, "posterior.csv"))?;
    write_json(&path_in(out, "summary.json"), &outcome.report.summary)?;
    Ok(Some(outcome.report))
}

/// Builds the report with its figure tables and writes `report.json` and
/// the `figures/` directory.
pub fn assemble_report(
    config: &RunConfig,
    detector: CalibrationArtifact,
    datasets: Vec<DatasetReport>,
    spectra: Vec<BinnedSpectrum>,
    fit: Option<FitReport>,
    timings: BTreeMap<String, f64>,
) -> Result<RunReport> {
    let figures = stage(
        "report",
        figure_data(
            &config.species()?,
            config.threshold,
            config.fit.overdispersion,
            &datasets,
            &spectra,
            fit.as_ref(),
        ),
    )?;
    let mut report = RunReport {
        schema_version: crate::schema::VERSION.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        config: config.clone(),
        detector,
        datasets,
        spectra,
        fit,
        figures,
        timings,
        report_hash: String::new(),
    };
    report.report_hash = report.compute_hash();
    write_json(&path_in(&config.out_dir, "report.json"), &report)?;
    write_figure_data(&report.figures, &path_in(&config.out_dir, "figures"))?;
    Ok(report)
}

/// Runs every stage for `config` and writes artifacts under `out_dir`.
/// Artifacts written before a failing stage are kept.
pub fn run_experiment(config: &RunConfig) -> Result<RunReport> {
    let out = prepare_out_dir(config)?;
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let detector = calibrate_detector(config)?;
    detector.save(&path_in(&out, "calibration.json"))?;
    timings.insert("calibration".to_string(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let analyses: Vec<DatasetAnalysis> = stage(
        "datasets",
        (0..config.pressures.len())
            .into_par_iter()
            .map(|i| run_dataset(config, &detector, i, &out))
            .collect::<Result<Vec<_>>>(),
    )?;
    timings.insert("datasets".to_string(), t.elapsed().as_secs_f64());
    let spectra: Vec<BinnedSpectrum> = analyses.into_iter().map(|a| a.spectrum).collect();
    let datasets: Vec<DatasetReport> = spectra
        .iter()
        .enumerate()
        .map(|(i, s)| dataset_report(config, i, s))
        .collect();

    let t = Instant::now();
    let fit = fit_included(config, &datasets, &spectra, &out)?;
    timings.insert("fit".to_string(), t.elapsed().as_secs_f64());
    assemble_report(config, detector, datasets, spectra, fit, timings)
}

fn trace_header(
    config: &RunConfig,
    detector: &CalibrationArtifact,
    sim: &TraceSimulator,
    i: usize,
) -> TraceHeader {
    TraceHeader {
        schema_version: crate::schema::VERSION.into(),
        sample_rate: detector.oscillator.sample_rate,
        duration: config.duration,
        n_samples: sim.total_samples(),
        n_windows: sim.monitor_power().len(),
        seed: config.derive_seed("trace", i as u64),
        oscillator: detector.oscillator,
        noise: detector.noise.clone(),
        calibration_schedule: sim.calibration_schedule().to_vec(),
        metadata: BTreeMap::from([
            ("dataset_id".to_string(), dataset_id(config, i)),
            (
                "nominal_pressure".to_string(),
                config.pressures[i].to_string(),
            ),
        ]),
    }
}

fn run_dataset(
    config: &RunConfig,
    detector: &CalibrationArtifact,
    i: usize,
    out: &Path,
) -> Result<DatasetAnalysis> {
    let id = dataset_id(config, i);
    let mut sim = simulate_dataset(config, detector, i)?;
    let analysis = if config.write_traces {
        let path = trace_path(out, &id);
        write_trace(&path, &trace_header(config, detector, &sim, i), &mut sim)?;
        let mut file = TraceFile::open(&path)?;
        analyze_source(config, detector, &mut file, &id, config.pressures[i])?
    } else {
        analyze_source(config, detector, &mut sim, &id, config.pressures[i])?
    };
    analysis.spectrum.save(&spectrum_stem(out, &id))?;
    if config.write_events {
        write_events_csv(
            &path_in(out, &format!("{id}_events.csv")),
            &analysis.reconstruction.candidates,
        )?;
    }
    Ok(analysis)
}

/// `simulate` stage: calibrates the detector and writes one trace file and
/// one truth table per dataset.
pub fn simulate_stage(config: &RunConfig) -> Result<CalibrationArtifact> {
    let out = prepare_out_dir(config)?;
    let detector = calibrate_detector(config)?;
    detector.save(&path_in(&out, "calibration.json"))?;
    stage(
        "simulate",
        (0..config.pressures.len())
            .into_par_iter()
            .map(|i| {
                let id = dataset_id(config, i);
                let mut sim = simulate_dataset(config, &detector, i)?;
                write_trace(
                    &trace_path(&out, &id),
                    &trace_header(config, &detector, &sim, i),
                    &mut sim,
                )?;
                write_dataset_truth(config, i, &path_in(&out, &format!("{id}_truth.csv")))
            })
            .collect::<Result<Vec<()>>>(),
    )?;
    Ok(detector)
}

/// `reconstruct` stage: turns the trace files of `simulate` into spectra
/// and writes `datasets.json`.
pub fn reconstruct_stage(config: &RunConfig) -> Result<Vec<DatasetReport>> {
    config.validate()?;
    let out = &config.out_dir;
    let detector = stage(
        "reconstruct",
        CalibrationArtifact::load(&path_in(out, "calibration.json")),
    )?;
    let spectra = stage(
        "reconstruct",
        (0..config.pressures.len())
            .into_par_iter()
            .map(|i| {
                let id = dataset_id(config, i);
                let mut file = TraceFile::open(&trace_path(out, &id))?;
                let a = analyze_source(config, &detector, &mut file, &id, config.pressures[i])?;
                a.spectrum.save(&spectrum_stem(out, &id))?;
                if config.write_events {
                    write_events_csv(
                        &path_in(out, &format!("{id}_events.csv")),
                        &a.reconstruction.candidates,
                    )?;
                }
                Ok(a.spectrum)
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    let datasets: Vec<DatasetReport> = spectra
        .iter()
        .enumerate()
        .map(|(i, s)| dataset_report(config, i, s))
        .collect();
    write_json(
        &path_in(out, "datasets.json"),
        &VersionedDatasets::new(datasets.clone()),
    )?;
    Ok(datasets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VersionedDatasets {
    schema_version: String,
    datasets: Vec<DatasetReport>,
}

impl VersionedDatasets {
    fn new(datasets: Vec<DatasetReport>) -> Self {
        VersionedDatasets {
            schema_version: crate::schema::VERSION.into(),
            datasets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VersionedFit {
    schema_version: String,
    fit: Option<FitReport>,
}

fn load_reconstruction(config: &RunConfig) -> Result<(Vec<DatasetReport>, Vec<BinnedSpectrum>)> {
    let out = &config.out_dir;
    let datasets =
        read_versioned_json::<VersionedDatasets>(&path_in(out, "datasets.json"))?.datasets;
    let spectra = datasets
        .iter()
        .map(|d| BinnedSpectrum::load(&spectrum_stem(out, &d.dataset_id)))
        .collect::<Result<Vec<_>>>()?;
    Ok((datasets, spectra))
}

/// `fit` stage: joint fit of the spectra from `reconstruct`; writes
/// `fit.json` next to the posterior.
pub fn fit_stage(config: &RunConfig) -> Result<Option<FitReport>> {
    config.validate()?;
    let (datasets, spectra) = stage("fit", load_reconstruction(config))?;
    let fit = fit_included(config, &datasets, &spectra, &config.out_dir)?;
    write_json(
        &path_in(&config.out_dir, "fit.json"),
        &VersionedFit {
            schema_version: crate::schema::VERSION.into(),
            fit: fit.clone(),
        },
    )?;
    Ok(fit)
}

/// `report` stage: collects the artifacts of the earlier stages into the
/// run report and figure tables.
pub fn report_stage(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let out = &config.out_dir;
    let (detector, datasets, spectra, fit) = stage(
        "report",
        (|| {
            let detector = CalibrationArtifact::load(&path_in(out, "calibration.json"))?;
            let (datasets, spectra) = load_reconstruction(config)?;
            let fit = read_versioned_json::<VersionedFit>(&path_in(out, "fit.json"))?.fit;
            Ok((detector, datasets, spectra, fit))
        })(),
    )?;
    assemble_report(config, detector, datasets, spectra, fit, BTreeMap::new())
}

/// Writes the collision and pulse truth of dataset `i`.
pub fn write_dataset_truth(config: &RunConfig, i: usize, path: &Path) -> Result<()> {
    let params = SpectrumParams {
        gas: config.species()?,
        env: Environment::at_pressure(config.pressures[i]),
        sphere: SphereSurface::nominal(config.surface_temperature, config.alpha),
        sigma_q: config.sigma_q,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.derive_seed("collisions", i as u64));
    let collisions = sample_impulse_train(&params, config.duration, &mut rng)?;
    let pulses = schedule_calibration_pulses(
        config.duration,
        config.calibration.in_situ_period,
        config.calibration.amplitude,
    )?;
    write_truth_csv(path, &collisions.merge(&pulses))
}
