//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed. The full run
//! takes on the order of an hour on one core, dominated by the coverage
//! study. `ACCEPTANCE_ONLY=1,2,8` restricts the run to selected criteria;
//! `ACCEPTANCE_TRIALS` changes the per-gas trial count of the coverage study
//! (below 100 that criterion is reported as FAIL).

use gasimpulse::dynsim::{
    calibrate_noise_floor, measure_pulse_resolution, schedule_calibration_pulses,
    NoiseFloorSettings, OscillatorConfig, TraceSimulator,
};
use gasimpulse::inference::{
    autocorrelation_time, background_only_fit, box_to_logit, fixed_signal_fit, logit_log_jacobian,
    logit_to_box, run_ensemble, run_mapped, FitDataset, McmcSettings, NelderMeadSettings,
    Posterior, SensitivitySettings,
};
use gasimpulse::kinetics::{
    diffuse_density, momentum_scale, specular_density, total_collision_rate, DiffuseSettings,
    Environment, GasSpecies, SphereSurface,
};
use gasimpulse::numeric::gauss_legendre;
use gasimpulse::pipeline::{
    analyze_source, calibrate_detector, dataset_id, model_settings, nominal_alpha, response_table,
    run_closure, run_experiment, simulate_dataset, RunConfig,
};
use gasimpulse::recon::{
    calibration_sweep, measure_resolution_and_linearity, reconstruct, MatchedFilter, ReconSettings,
};
use gasimpulse::units::{impulse_sql, BOLTZMANN};
use statrs::distribution::{ContinuousCDF, Normal};
use std::time::Instant;

const GASES: [&str; 3] = ["Kr", "Xe", "SF6"];
const MOMENTUM_SCALES: [f64; 3] = [125.6, 157.2, 165.8];
const QUOTED_FLOOR: f64 = 2e-9;
const RHAT_MAX: f64 = 1.05;
const ESS_MIN: f64 = 500.0;
/// sqrt(n) D at the 1% level of the Kolmogorov distribution.
const KS_CRITICAL: f64 = 1.628;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> gasimpulse::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Convergence numbers of every fit produced along the way.
#[derive(Default)]
struct FitLog {
    fits: Vec<(String, f64, f64)>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let (x, w) = gauss_legendre(20, 0.0, 1.0);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * h;
            x.iter()
                .zip(&w)
                .map(|(x, w)| w * h * f(lo + x * h))
                .sum::<f64>()
        })
        .sum()
}

fn normalization() -> gasimpulse::Result<Outcome> {
    let mut worst_spec: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let grid: Vec<f64> = (0..=1500).map(|i| i as f64).collect();
    for gas in GASES {
        let g = GasSpecies::from_name(gas)?;
        let e = Environment::at_pressure(1e-7);
        for alpha in [0.0, 0.55, 0.9] {
            let s = SphereSurface::nominal(293.0, alpha);
            let scale = momentum_scale(&g, &e);
            let num = integrate(
                |q| specular_density(q, &g, &e, &s).unwrap(),
                0.0,
                12.0 * scale,
                60,
            );
            let closed = (1.0 - alpha)
                * std::f64::consts::PI
                * s.radius.powi(2)
                * e.pressure_pa()
                * (8.0 / (std::f64::consts::PI * g.mass_kg() * BOLTZMANN * e.gas_temperature))
                    .sqrt();
            if alpha < 1.0 {
                worst_spec = worst_spec.max(rel(num, closed));
            }
        }
        for alpha in [0.55, 1.0] {
            let s = SphereSurface::nominal(293.0, alpha);
            let d = diffuse_density(&grid, &g, &e, &s, &DiffuseSettings::default())?;
            worst_diff =
                worst_diff.max(rel(d.integral(), alpha * total_collision_rate(&g, &e, &s)));
        }
    }
    outcome(
        worst_spec < 1e-6 && worst_diff < 0.01,
        format!("specular max rel err {worst_spec:.1e} (< 1e-6); diffuse MC (1e6 samples) max rel err {worst_diff:.2e} (< 1e-2)"),
    )
}

fn momentum_scales() -> gasimpulse::Result<Outcome> {
    let env = Environment::at_pressure(1e-7);
    let mut pass = true;
    let mut parts = Vec::new();
    for (gas, want) in GASES.iter().zip(MOMENTUM_SCALES) {
        let s = momentum_scale(&GasSpecies::from_name(gas)?, &env);
        pass &= rel(s, want) <= 0.005;
        parts.push(format!("{gas} {s:.2} (want {want})"));
    }
    outcome(pass, format!("{} keV/c; tolerance 0.5%", parts.join(", ")))
}

fn filter_calibration() -> gasimpulse::Result<Outcome> {
    let osc = OscillatorConfig::default();
    let settings = NoiseFloorSettings::default();
    let noise = calibrate_noise_floor(&osc, 60.0, &settings)?;
    let amps: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64).collect();
    let train = calibration_sweep(&amps, 100, 0.025, 25e-6);
    let duration = (train.len() + 1) as f64 * 0.025;
    let recon = ReconSettings::default();
    let mut sim = TraceSimulator::new(&osc, &noise, &train, duration, 61)?;
    let rec = reconstruct(
        &mut sim,
        &MatchedFilter::new(&osc, recon.filter)?,
        None,
        &recon,
        &[],
        0,
    )?;
    let mut groups: Vec<(f64, Vec<f64>)> = amps.iter().map(|&a| (a, Vec::new())).collect();
    for p in train.iter() {
        if let Some(c) = rec.pulse_reading(p.time, 0) {
            groups
                .iter_mut()
                .find(|g| g.0 == p.amplitude)
                .unwrap()
                .1
                .push(c.amplitude);
        }
    }
    let fit = measure_resolution_and_linearity(&groups)?.fit;
    // Independent calibration run at the calibration amplitude.
    let check = NoiseFloorSettings {
        seed: 0xacce_97,
        ..settings
    };
    let sigma = measure_pulse_resolution(&osc, &noise, &check)?.sigma;
    let ratio = sigma / impulse_sql(osc.mass, osc.omega());
    outcome(
        (0.98..=1.02).contains(&fit.slope) && (54.0..=66.0).contains(&sigma) && (4.0..=6.0).contains(&ratio),
        format!(
            "slope {:.4} +- {:.4} over 100-1000 keV/c (want [0.98, 1.02]); resolution {sigma:.1} keV/c (want [54, 66]); {ratio:.2} x SQL (want [4, 6])",
            fit.slope, fit.slope_err
        ),
    )
}

fn cuts() -> gasimpulse::Result<Outcome> {
    let config = RunConfig {
        duration: 20.0,
        ..RunConfig::default()
    };
    let detector = calibrate_detector(&config)?;
    // gof: held-out calibration run read with the stored template.
    let n_pulses = 1000;
    let train = calibration_sweep(
        &[config.calibration.amplitude],
        n_pulses,
        config.calibration.spacing,
        25e-6,
    );
    let duration = (n_pulses + 1) as f64 * config.calibration.spacing;
    let recon = ReconSettings::default();
    let mut sim = TraceSimulator::new(
        &detector.oscillator,
        &detector.noise,
        &train,
        duration,
        config.derive_seed("acceptance-gof", 0),
    )?;
    let filter = MatchedFilter::new(&detector.oscillator, recon.filter)?;
    let rec = reconstruct(&mut sim, &filter, Some(&detector.template), &recon, &[], 0)?;
    let gofs: Vec<f64> = train
        .iter()
        .filter_map(|p| rec.pulse_reading(p.time, 0).map(|c| c.gof))
        .collect();
    let gof_frac =
        gofs.iter().filter(|&&g| g > detector.gof_threshold).count() as f64 / gofs.len() as f64;

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
        config.derive_seed("acceptance-cuts", 0),
    )?;
    let a = analyze_source(&config, &detector, &mut sim, "noise", 0.0)?;
    let (noise, stab, removed) = (
        a.noise.fraction(),
        a.stability.fraction(),
        a.live.removed_fraction(),
    );
    let near = |x: f64, c: f64, tol: f64| (x - c).abs() <= tol;
    outcome(
        near(gof_frac, 0.02, 0.01) && near(noise, 0.159, 0.02) && near(stab, 0.159, 0.02) && near(removed, 0.30, 0.05),
        format!(
            "gof removes {:.1}% of {} held-out calibration pulses (want 2 +- 1); noise {:.1}%, stability {:.1}% (want 15.9 +- 2); live time removed {:.1}% of {:.0} s (want 30 +- 5)",
            100.0 * gof_frac,
            gofs.len(),
            100.0 * noise,
            100.0 * stab,
            100.0 * removed,
            config.duration
        ),
    )
}

fn spectrum_closure(log: &mut FitLog) -> gasimpulse::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for gas in GASES {
        let config = RunConfig {
            gas: gas.into(),
            alpha: nominal_alpha(gas)?,
            duration: 30.0,
            out_dir: dir.path().join(gas),
            ..RunConfig::default()
        };
        let report = run_experiment(&config)?;
        let Some(fit) = report.fit else {
            pass = false;
            parts.push(format!("{gas}: no fit"));
            continue;
        };
        let s = &fit.summary;
        log.fits
            .push((format!("{gas} joint fit"), s.max_rhat, s.min_ess));
        let alpha_ok = (s.alpha_med - config.alpha).abs() <= 0.15;
        let devs: Vec<f64> = s
            .datasets
            .iter()
            .zip(&config.pressures)
            .map(|(d, p)| d.pressure.median / p - 1.0)
            .collect();
        let p_ok = devs.len() == config.pressures.len() && devs.iter().all(|d| d.abs() <= 0.15);
        let ts_ok = s.ts_ul_95.is_finite() && s.ts_ul_95 > 293.0;
        pass &= alpha_ok && p_ok && ts_ok;
        parts.push(format!(
            "{gas}: alpha {:.3} (truth {}, {}), P dev [{}] ({}), T_s < {:.0} K ({})",
            s.alpha_med,
            config.alpha,
            if alpha_ok { "ok" } else { "off" },
            devs.iter()
                .map(|d| format!("{:+.0}%", 100.0 * d))
                .collect::<Vec<_>>()
                .join(" "),
            if p_ok { "ok" } else { "off" },
            s.ts_ul_95,
            if ts_ok { "ok" } else { "off" }
        ));
    }
    outcome(pass, format!("3 x 30 s per gas; {}", parts.join("; ")))
}

fn coverage(log: &mut FitLog) -> gasimpulse::Result<Outcome> {
    let trials = std::env::var("ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(100usize);
    let mut config = RunConfig::default();
    config.closure.trials = trials;
    let report = run_closure(&config)?;
    let mut pass = trials >= 100;
    let mut parts = Vec::new();
    for g in &report.gases {
        for t in &g.trials {
            log.fits.push((
                format!("{} closure trial {}", g.gas, t.trial),
                t.max_rhat,
                t.min_ess,
            ));
        }
        let ok = g.completed == trials
            && (g.alpha_coverage - 0.68).abs() <= 0.10
            && g.ts_coverage >= 0.90;
        pass &= ok;
        parts.push(format!(
            "{}: alpha 68% coverage {:.2}, T_s 95% coverage {:.2} ({} of {} completed)",
            g.gas, g.alpha_coverage, g.ts_coverage, g.completed, trials
        ));
    }
    outcome(
        pass,
        format!(
            "{trials} trials per gas at {:.1} s live; {}",
            config.closure.live_time,
            parts.join("; ")
        ),
    )
}

fn sensitivity_floor() -> gasimpulse::Result<Outcome> {
    // 235 s raw leaves ~2.8 min of live time after cuts and the veto.
    let duration = 235.0;
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
    let live = a.spectrum.live_time;
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
    let f = fit.floor_pressure;
    outcome(
        f >= QUOTED_FLOOR / 3.0 && f <= QUOTED_FLOOR * 3.0,
        format!(
            "Xe floor {f:.2e} mbar from {:.2} min live (want [{:.1e}, {:.1e}])",
            live / 60.0,
            QUOTED_FLOOR / 3.0,
            QUOTED_FLOOR * 3.0
        ),
    )
}

fn pileup() -> gasimpulse::Result<Outcome> {
    let config = RunConfig {
        pressures: vec![5e-8, 1e-6],
        duration: 10.0,
        ..RunConfig::default()
    };
    let detector = calibrate_detector(&config)?;
    let table = response_table(&config, &[config.sigma_q])?;
    let mut worst = Vec::new();
    for (i, &p) in config.pressures.iter().enumerate() {
        let mut sim = simulate_dataset(&config, &detector, i)?;
        let a = analyze_source(&config, &detector, &mut sim, &dataset_id(&config, i), p)?;
        let sigma_cal = a.spectrum.meta.calibration_sigma.unwrap_or(config.sigma_q);
        let fit = fixed_signal_fit(
            table.clone(),
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
        worst.push(fit.max_abs_significance);
    }
    outcome(
        worst[0] <= 3.0 && worst[1] > 3.0,
        format!(
            "largest bin deviation from the single-collision model: {:.2} sigma at 5e-8 mbar (want <= 3), {:.2} sigma at 1e-6 mbar (want > 3); 10 s each",
            worst[0], worst[1]
        ),
    )
}

fn truncated_ks(post: &Posterior, cut: f64) -> f64 {
    let chains: Vec<Vec<f64>> = (0..post.n_walkers)
        .map(|k| {
            (0..post.n_kept)
                .map(|s| post.samples[s * post.n_walkers + k])
                .collect()
        })
        .collect();
    let stride = (2.0 * autocorrelation_time(&chains)).ceil() as usize;
    let mut x: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.iter().step_by(stride).copied())
        .collect();
    x.sort_by(f64::total_cmp);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let tail = 1.0 - norm.cdf(cut);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = (norm.cdf(v) - norm.cdf(cut)) / tail;
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    d * n.sqrt()
}

fn hygiene(log: &FitLog) -> gasimpulse::Result<Outcome> {
    let settings = McmcSettings {
        n_steps: 20_000,
        burn_in: 2000,
        seed: 3,
        ..McmcSettings::default()
    };
    let (cut, top) = (0.5, 20.0);
    let boxed = run_ensemble(
        |x: &[f64]| -0.5 * x[0] * x[0],
        vec!["x".into()],
        &[1.0],
        &[1.0],
        &[cut],
        &[top],
        &settings,
    )?;
    let mapped = run_mapped(
        |x: &[f64]| -0.5 * x[0] * x[0],
        |u: &[f64]| {
            Some((
                vec![logit_to_box(u[0], cut, top)],
                logit_log_jacobian(u[0], cut, top),
            ))
        },
        vec!["x".into()],
        &[box_to_logit(1.0, cut, top)],
        &[0.5],
        &settings,
    )?;
    let (ks_box, ks_logit) = (truncated_ks(&boxed, cut), truncated_ks(&mapped, cut));
    let bad: Vec<&(String, f64, f64)> = log
        .fits
        .iter()
        .filter(|(_, r, e)| !(*r <= RHAT_MAX && *e >= ESS_MIN))
        .collect();
    let worst_rhat = log.fits.iter().map(|f| f.1).fold(f64::NAN, f64::max);
    let worst_ess = log.fits.iter().map(|f| f.2).fold(f64::NAN, f64::min);
    let mut detail = format!(
        "{} fits checked, {} outside R-hat <= {RHAT_MAX} / ESS >= {ESS_MIN} (worst R-hat {worst_rhat:.3}, min ESS {worst_ess:.0}); truncated Gaussian sqrt(n) D = {ks_box:.3} (box), {ks_logit:.3} (logit) (want < {KS_CRITICAL}, p > 0.01)",
        log.fits.len(),
        bad.len()
    );
    if let Some(b) = bad.first() {
        detail.push_str(&format!(
            "; first offender {} (R-hat {:.3}, ESS {:.0})",
            b.0, b.1, b.2
        ));
    }
    if log.fits.is_empty() {
        detail.push_str("; no fits were run (criteria 5 and 6 skipped)");
    }
    outcome(
        bad.is_empty() && !log.fits.is_empty() && ks_box < KS_CRITICAL && ks_logit < KS_CRITICAL,
        detail,
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let selected = |k: usize| only.as_ref().map_or(true, |o| o.contains(&k));
    // libtest-style arguments (e.g. a name filter from `cargo test foo`) are
    // ignored; listing mode prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut log = FitLog::default();
    let mut failed = 0;
    let mut run =
        |k: usize, name: &str, f: &mut dyn FnMut(&mut FitLog) -> gasimpulse::Result<Outcome>| {
            if !selected(k) {
                println!("criterion {k} ({name}): SKIPPED");
                return;
            }
            let t = Instant::now();
            let o = f(&mut log).unwrap_or_else(|e| Outcome {
                pass: false,
                detail: format!("error: {e}"),
            });
            if !o.pass {
                failed += 1;
            }
            println!(
                "criterion {k} ({name}): {} [{:.0} s] {}",
                if o.pass { "PASS" } else { "FAIL" },
                t.elapsed().as_secs_f64(),
                o.detail
            );
        };
    run(1, "kinetics normalization", &mut |_| normalization());
    run(2, "momentum scales", &mut |_| momentum_scales());
    run(3, "filter calibration closure", &mut |_| {
        filter_calibration()
    });
    run(4, "cut behavior", &mut |_| cuts());
    run(5, "spectrum closure", &mut |l| spectrum_closure(l));
    run(6, "coverage study", &mut |l| coverage(l));
    run(7, "sensitivity floor", &mut |_| sensitivity_floor());
    run(8, "pile-up validation", &mut |_| pileup());
    run(9, "MCMC hygiene", &mut |l| hygiene(l));
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
