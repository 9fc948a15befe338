//! Matched-filter reconstruction of known pulses in calibrated noise: each
//! reading against its injected amplitude.

use gasimpulse::dynsim::{
    calibrate_noise_floor, ImpulseTrain, NoiseFloorSettings, OscillatorConfig, TraceSimulator,
};
use gasimpulse::recon::{calibration_sweep, reconstruct, MatchedFilter, ReconSettings};

fn main() -> gasimpulse::Result<()> {
    let osc = OscillatorConfig::default();
    let noise = calibrate_noise_floor(&osc, 60.0, &NoiseFloorSettings::default())?;
    let settings = ReconSettings::default();
    let filter = MatchedFilter::new(&osc, settings.filter)?;
    let train: ImpulseTrain = calibration_sweep(&[200.0, 500.0, 1000.0], 5, 0.025, 25e-6);
    let duration = (train.len() + 1) as f64 * 0.025;
    let mut sim = TraceSimulator::new(&osc, &noise, &train, duration, 4)?;
    let rec = reconstruct(&mut sim, &filter, None, &settings, &[], 0)?;
    println!(
        "{} search windows, {} candidates",
        rec.n_windows,
        rec.candidates.len()
    );
    println!("  time [s]   injected   reconstructed  [keV/c]");
    for p in train.iter() {
        let c = rec.pulse_reading(p.time, settings.veto_reach);
        println!(
            "  {:8.5}  {:9.0}  {:>13}",
            p.time,
            p.amplitude,
            c.map_or("missed".into(), |c| format!("{:.1}", c.amplitude))
        );
    }
    let sigma: f64 = rec.window_sigma.iter().sum::<f64>() / rec.window_sigma.len() as f64;
    println!("predicted filter noise {sigma:.1} keV/c");
    Ok(())
}
