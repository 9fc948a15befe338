//! Smallest resolvable Xe pressure from a collision-free dataset: fit the
//! Gaussian background alone, then profile the signal pressure.
//!
//! cargo run --release --example sensitivity_floor [raw_duration_s]

use gasimpulse::dynsim::{schedule_calibration_pulses, TraceSimulator};
use gasimpulse::inference::{background_only_fit, FitDataset, SensitivitySettings};
use gasimpulse::pipeline::{
    analyze_source, calibrate_detector, model_settings, response_table, RunConfig,
};

fn main() -> gasimpulse::Result<()> {
    let duration: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(235.0);
    let config = RunConfig {
        duration,
        ..RunConfig::default()
    };
    let detector = calibrate_detector(&config)?;
    let pulses = schedule_calibration_pulses(
        duration,
        config.calibration.in_situ_period,
        config.calibration.amplitude,
    )?;
    let mut sim = TraceSimulator::new(
        &detector.oscillator,
        &detector.noise,
        &pulses,
        duration,
        config.derive_seed("noise-only", 0),
    )?;
    let a = analyze_source(&config, &detector, &mut sim, "noise", 0.0)?;
    println!(
        "{} counts above threshold in {:.1} s live ({:.2} min)",
        a.spectrum.total(),
        a.spectrum.live_time,
        a.spectrum.live_time / 60.0
    );
    let sigma_cal = a.spectrum.meta.calibration_sigma.unwrap_or(config.sigma_q);
    let fit = background_only_fit(
        response_table(&config, &[sigma_cal])?,
        FitDataset {
            spectrum: a.spectrum,
            sigma_cal,
        },
        model_settings(&config),
        &SensitivitySettings {
            alpha: config.alpha,
            ..SensitivitySettings::default()
        },
    )?;
    println!(
        "background: {:.0}/s, mean {:.1}, sigma {:.1} keV/c",
        fit.background.rate, fit.background.mean, fit.background.sigma
    );
    println!(
        "best pressure {:.2e} mbar, LR statistic {:.2}",
        fit.best_pressure, fit.lr_statistic
    );
    println!("sensitivity floor {:.2e} mbar", fit.floor_pressure);
    Ok(())
}
