//! Pile-up at high pressure: the single-collision model, held at the true
//! pressure with only resolution and background refitted, leaves >3 sigma
//! deviations at 1e-6 mbar but not at 5e-8 mbar.
//!
//! cargo run --release --example pileup [duration_s] [seed]

use gasimpulse::inference::{fixed_signal_fit, FitDataset, NelderMeadSettings};
use gasimpulse::pipeline::{
    analyze_source, calibrate_detector, dataset_id, model_settings, response_table,
    simulate_dataset, RunConfig,
};
use std::sync::Arc;

fn main() -> gasimpulse::Result<()> {
    let duration: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(10.0);
    let seed: u64 = std::env::args()
        .nth(2)
        .and_then(|a| a.parse().ok())
        .unwrap_or(1);
    let config = RunConfig {
        pressures: vec![5e-8, 1e-6],
        duration,
        seed,
        ..RunConfig::default()
    };
    let detector = calibrate_detector(&config)?;
    println!("pulse resolution {:.1} keV/c", detector.pulse_sigma);
    let table = response_table(&config, &[config.sigma_q])?;
    for (i, &p) in config.pressures.iter().enumerate() {
        let mut sim = simulate_dataset(&config, &detector, i)?;
        let a = analyze_source(&config, &detector, &mut sim, &dataset_id(&config, i), p)?;
        let sigma_cal = a.spectrum.meta.calibration_sigma.unwrap_or(config.sigma_q);
        let fit = fixed_signal_fit(
            Arc::clone(&table),
            FitDataset {
                spectrum: a.spectrum,
                sigma_cal,
            },
            model_settings(&config),
            config.alpha,
            config.surface_temperature,
            p,
            &NelderMeadSettings::default(),
        )?;
        if std::env::var_os("PILEUP_VERBOSE").is_some() {
            println!(
                "{:?}",
                fit.significance
                    .iter()
                    .map(|r| (r * 100.0).round() / 100.0)
                    .collect::<Vec<_>>()
            );
        }
        let worst = fit
            .significance
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        println!(
            "P = {p:.1e} mbar: largest deviation {:.2} sigma (bin {}), sigma_q {:.1}, bg {:.0}/s",
            fit.max_abs_significance, worst.0, fit.params.sigma_q, fit.params.bg_amplitude
        );
    }
    Ok(())
}
