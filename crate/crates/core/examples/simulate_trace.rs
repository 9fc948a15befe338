//! Simulates a short readout with gas collisions and in-situ calibration
//! pulses, writes it to disk and reads it back.

use gasimpulse::dynsim::{
    sample_impulse_train, schedule_calibration_pulses, write_trace, write_truth_csv, ImpulseOrigin,
    NoiseConfig, OscillatorConfig, ReadoutSource, TraceFile, TraceHeader, TraceSimulator,
};
use gasimpulse::kinetics::{Environment, GasSpecies, SpectrumParams, SphereSurface};
use gasimpulse::units::impulse_sql;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gasimpulse::Result<()> {
    let osc = OscillatorConfig::default();
    let noise = NoiseConfig {
        readout_noise_density: 1.66e-13,
        ..NoiseConfig::default()
    };
    let duration = 1.0;
    let params = SpectrumParams {
        gas: GasSpecies::xenon(),
        env: Environment::at_pressure(5e-8),
        sphere: SphereSurface::nominal(293.0, 0.61),
        sigma_q: 60.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let train = sample_impulse_train(&params, duration, &mut rng)?
        .merge(&schedule_calibration_pulses(duration, 0.3, 1040.0)?);
    println!(
        "{} collisions, {} calibration pulses; SQL {:.1} keV/c",
        train.of_origin(ImpulseOrigin::Collision).len(),
        train.of_origin(ImpulseOrigin::Calibration).len(),
        impulse_sql(osc.mass, osc.omega())
    );

    let dir = std::env::temp_dir().join("gasimpulse_simulate_trace");
    std::fs::create_dir_all(&dir)?;
    let mut sim = TraceSimulator::new(&osc, &noise, &train, duration, 9)?;
    let header = TraceHeader {
        schema_version: gasimpulse::schema::VERSION.into(),
        sample_rate: osc.sample_rate,
        duration,
        n_samples: sim.total_samples(),
        n_windows: sim.monitor_power().len(),
        seed: 9,
        oscillator: osc,
        noise: noise.clone(),
        calibration_schedule: sim.calibration_schedule().to_vec(),
        metadata: Default::default(),
    };
    write_trace(&dir.join("xe.trace"), &header, &mut sim)?;
    write_truth_csv(&dir.join("xe_truth.csv"), &train)?;

    let mut file = TraceFile::open(&dir.join("xe.trace"))?;
    let mut buf = vec![0.0; 1 << 16];
    let (mut n, mut sum_sq) = (0usize, 0.0);
    loop {
        let got = file.read(&mut buf)?;
        if got == 0 {
            break;
        }
        sum_sq += buf[..got].iter().map(|z| z * z).sum::<f64>();
        n += got;
    }
    println!(
        "read back {n} samples, rms displacement {:.3e} m",
        (sum_sq / n as f64).sqrt()
    );
    println!("files in {}", dir.display());
    Ok(())
}
