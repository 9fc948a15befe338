//! Noise, stability and goodness-of-fit cuts on a collision-free dataset,
//! with the resulting live time.

use gasimpulse::dynsim::{schedule_calibration_pulses, TraceSimulator};
use gasimpulse::pipeline::{analyze_source, calibrate_detector, RunConfig};

fn main() -> gasimpulse::Result<()> {
    let config = RunConfig {
        duration: 20.0,
        ..RunConfig::default()
    };
    let detector = calibrate_detector(&config)?;
    println!(
        "calibration run: template from {:.0} keV/c pulses, gof threshold {:.3}",
        config.calibration.amplitude, detector.gof_threshold
    );
    let pulses = schedule_calibration_pulses(
        config.duration,
        config.calibration.in_situ_period,
        config.calibration.amplitude,
    )?;
    let mut sim = TraceSimulator::new(
        &detector.oscillator,
        &detector.noise,
        &pulses,
        config.duration,
        17,
    )?;
    let a = analyze_source(&config, &detector, &mut sim, "noise", 0.0)?;
    for (name, c) in [
        ("noise", a.noise),
        ("stability", a.stability),
        ("gof", a.gof),
    ] {
        println!(
            "{name:>9} cut: flags {:5.1}% ({} of {})",
            100.0 * c.fraction(),
            c.flagged,
            c.considered
        );
    }
    let l = a.live;
    println!(
        "live time {:.2} of {:.2} s ({:.1}% removed: noise {:.2} s, stability {:.2} s, veto {:.2} s)",
        l.live,
        l.raw,
        100.0 * l.removed_fraction(),
        l.noise_removed,
        l.stability_removed,
        l.veto_removed
    );
    let mean_pulse =
        a.calibration_amplitudes.iter().sum::<f64>() / a.calibration_amplitudes.len() as f64;
    println!(
        "{} in-situ pulses read at {mean_pulse:.0} keV/c on average",
        a.calibration_amplitudes.len()
    );
    Ok(())
}
