//! Configuration, end-to-end runs, figure tables and coverage studies.

pub mod closure;
pub mod config;
pub mod figures;
pub mod io;
pub mod run;

pub use closure::{
    closure_trial, closure_truth, gas_coverage, run_closure, ClosureReport, GasCoverage,
    TrialOutcome,
};
pub use config::{
    derive_seed, nominal_alpha, sha256_hex, CalibrationSection, ClosureSection, FitSection,
    NoiseSection, RunConfig,
};
pub use figures::{
    dataset_table, figure_data, integrate_curve, model_curve, write_figure_data, CurvePoint,
    DatasetModel, DatasetTable, FigureData, PressurePoint, PressureTable, RateRow, RATE_HEADER,
};
pub use io::{read_versioned_json, write_json, CalibrationArtifact};
pub use run::{
    analyze_source, assemble_report, calibrate_detector, dataset_id, dataset_report,
    excluded_reason, fit_included, fit_spectra, fit_stage, model_settings, reconstruct_stage,
    report_stage, response_table, run_experiment, simulate_dataset, simulate_stage,
    write_dataset_truth, DatasetReport, FitOutcome, FitReport, RunReport,
};

/// Writes the figure tables of a completed run under `dir`.
pub fn emit_figure_data(
    report: &RunReport,
    dir: &std::path::Path,
) -> crate::Result<Vec<std::path::PathBuf>> {
    write_figure_data(&report.figures, dir)
}
