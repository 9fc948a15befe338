use gasimpulse::dynsim::*;
use gasimpulse::numeric::{mean, std_dev};
use gasimpulse::recon::*;
use gasimpulse::Error;
use proptest::prelude::*;
use std::sync::OnceLock;

const SIGMA_Q: f64 = 60.0;

fn osc() -> OscillatorConfig {
    OscillatorConfig::default()
}

/// Noise tuned once per test binary to the 60 keV/c resolution.
fn noise60() -> &'static NoiseConfig {
    static N: OnceLock<NoiseConfig> = OnceLock::new();
    N.get_or_init(|| {
        calibrate_noise_floor(&osc(), SIGMA_Q, &NoiseFloorSettings::default()).unwrap()
    })
}

fn filter() -> MatchedFilter {
    MatchedFilter::new(&osc(), FilterSettings::default()).unwrap()
}

fn pulse(t: f64, q: f64, origin: ImpulseOrigin) -> Impulse {
    Impulse {
        time: t,
        amplitude: q,
        origin,
    }
}

fn run(noise: &NoiseConfig, train: &ImpulseTrain, duration: f64, seed: u64) -> Reconstruction {
    let mut sim = TraceSimulator::new(&osc(), noise, train, duration, seed).unwrap();
    reconstruct(&mut sim, &filter(), None, &ReconSettings::default(), &[], 0).unwrap()
}

/// Calibration run: 1040 keV/c pulses every 25 ms, centred in search windows.
fn calibration() -> &'static CalibrationOutcome {
    static C: OnceLock<CalibrationOutcome> = OnceLock::new();
    C.get_or_init(|| {
        let train = calibration_sweep(&[1040.0], 300, 0.025, 25e-6);
        let duration = 301.0 * 0.025;
        let mut sim = TraceSimulator::new(&osc(), noise60(), &train, duration, 21).unwrap();
        characterize_calibration_run(
            &mut sim,
            &filter(),
            &ReconSettings::default(),
            &train.times(),
            0,
        )
        .unwrap()
    })
}

/// PSD of a pure-noise window at the 60 keV/c level.
fn noise_psd() -> NoisePsd {
    let f = filter();
    let tr = simulate_trajectory(&osc(), noise60(), &ImpulseTrain::default(), 0.1, 77).unwrap();
    f.estimate_psd(&tr.samples, &[]).unwrap()
}

fn filtered_peak(f: &MatchedFilter, psd: &NoisePsd, q: f64) -> f64 {
    let t0 = 0.05;
    let tr = simulate_trajectory(
        &osc(),
        &NoiseConfig::quiet(),
        &ImpulseTrain::new(vec![pulse(t0, q, ImpulseOrigin::Collision)]),
        0.1,
        0,
    )
    .unwrap();
    let mut padded = vec![0.0; f.fft_len()];
    let origin = -(f.margin() as i64);
    fill_padded(&tr.samples, origin, &mut padded);
    let out = f.filter(&padded, origin, psd).unwrap();
    let k = (t0 * osc().sample_rate).round() as usize;
    out.in_window()[k - 2..=k + 2]
        .iter()
        .copied()
        .fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m })
}

#[test]
fn noiseless_pulse_reconstructs_its_amplitude() {
    let f = filter();
    let psd = noise_psd();
    let a = filtered_peak(&f, &psd, 500.0);
    assert!((a - 500.0).abs() <= 5.0, "peak {a}");
}

#[test]
fn zero_trace_gives_zero_output() {
    let out = matched_filter(&vec![0.0; 600_000], &filter(), &[]).unwrap();
    assert_eq!(out.len(), 600_000);
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn filter_noise_matches_the_calibrated_resolution() {
    let rec = run(noise60(), &ImpulseTrain::default(), 0.6, 5);
    let tr = simulate_trajectory(&osc(), noise60(), &ImpulseTrain::default(), 0.6, 5).unwrap();
    let out = matched_filter(&tr.samples, &filter(), &[]).unwrap();
    for (k, chunk) in out.chunks(500_000).enumerate() {
        let rms = (chunk.iter().map(|v| v * v).sum::<f64>() / chunk.len() as f64).sqrt();
        assert!((rms / SIGMA_Q - 1.0).abs() < 0.1, "window {k}: rms {rms}");
        assert!((rec.window_sigma[k] / SIGMA_Q - 1.0).abs() < 0.1);
    }
}

#[test]
fn one_candidate_per_search_window() {
    let rec = run(noise60(), &ImpulseTrain::default(), 0.1, 6);
    assert_eq!(rec.candidates.len(), 2000);
    assert_eq!(rec.n_windows, 2000);
    assert!(rec
        .candidates
        .iter()
        .enumerate()
        .all(|(i, c)| c.window == i));
    let series = vec![1.0; 500_000];
    assert_eq!(scan_events(&series, 5e6, 50e-6).len(), 2000);
}

#[test]
fn large_pulse_dominates_exactly_one_window() {
    let t0 = 0.030125;
    let train = ImpulseTrain::new(vec![pulse(t0, 900.0, ImpulseOrigin::Collision)]);
    let rec = run(noise60(), &train, 0.1, 7);
    let big: Vec<&EventCandidate> = rec
        .candidates
        .iter()
        .filter(|c| c.abs_amplitude > 600.0)
        .collect();
    assert_eq!(big.len(), 1);
    assert_eq!(big[0].window, (t0 / SEARCH_WINDOW) as usize);
    assert!((big[0].time - t0).abs() < 2e-6);
}

#[test]
fn search_biases_pure_noise_upwards() {
    let rec = run(noise60(), &ImpulseTrain::default(), 0.5, 8);
    let a: Vec<f64> = rec.candidates.iter().map(|c| c.abs_amplitude).collect();
    // A single Gaussian sample has E|x| = 0.80 sigma.
    assert!(mean(&a) > 1.5 * SIGMA_Q, "mean |a| {}", mean(&a));
    // Almost no window maximum lies near zero, unlike a Gaussian.
    let near_zero = a.iter().filter(|&&x| x < 0.25 * SIGMA_Q).count() as f64 / a.len() as f64;
    assert!(near_zero < 0.02, "fraction near zero {near_zero}");
}

#[test]
fn pure_noise_tail_is_gaussian_shaped() {
    let rec = run(noise60(), &ImpulseTrain::default(), 2.0, 9);
    let w = 20.0;
    let edges: Vec<f64> = (0..=9).map(|i| 150.0 + w * i as f64).collect();
    let mut n = vec![0.0f64; edges.len() - 1];
    for c in &rec.candidates {
        let b = ((c.abs_amplitude - 150.0) / w).floor();
        if b >= 0.0 && (b as usize) < n.len() {
            n[b as usize] += 1.0;
        }
    }
    // Weighted quadratic fit of ln(count) against bin centre.
    let pts: Vec<(f64, f64, f64)> = n
        .iter()
        .zip(edges.windows(2))
        .filter(|(c, _)| **c >= 10.0)
        .map(|(c, e)| (0.5 * (e[0] + e[1]) - 200.0, c.ln(), *c))
        .collect();
    assert!(pts.len() >= 6);
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(x, y, wt) in &pts {
        let f = [1.0, x, x * x];
        for i in 0..3 {
            b[i] += wt * f[i] * y;
            for j in 0..3 {
                a[i][j] += wt * f[i] * f[j];
            }
        }
    }
    let coef = solve3(a, b);
    let chi2: f64 = pts
        .iter()
        .map(|&(x, y, wt)| wt * (y - coef[0] - coef[1] * x - coef[2] * x * x).powi(2))
        .sum();
    let dof = pts.len() as f64 - 3.0;
    assert!(coef[2] < 0.0, "tail is not Gaussian-curved: {coef:?}");
    assert!(chi2 / dof < 2.5, "chi2/dof {}", chi2 / dof);
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for i in 0..3 {
        let p = a[i][i];
        for j in i + 1..3 {
            let f = a[j][i] / p;
            for k in i..3 {
                a[j][k] -= f * a[i][k];
            }
            b[j] -= f * b[i];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (b[i] - (i + 1..3).map(|k| a[i][k] * x[k]).sum::<f64>()) / a[i][i];
    }
    x
}

#[test]
fn noise_cut_flags_the_upper_tail_of_stationary_noise() {
    let mut rec = run(noise60(), &ImpulseTrain::default(), 1.0, 10);
    let stats = apply_noise_cut(&mut rec.candidates, 1.0);
    assert!(
        (stats.fraction() - 0.159).abs() < 0.02,
        "flagged {}",
        stats.fraction()
    );
}

#[test]
fn noise_cut_flags_a_burst() {
    let mut noise = noise60().clone();
    noise.bursts.push(NoiseBurst {
        start: 0.3,
        duration: 0.01,
        factor: 3.0,
    });
    let mut rec = run(&noise, &ImpulseTrain::default(), 1.0, 11);
    apply_noise_cut(&mut rec.candidates, 1.0);
    let inside: Vec<&EventCandidate> = rec
        .candidates
        .iter()
        .filter(|c| c.time > 0.3005 && c.time < 0.3095)
        .collect();
    let hit = inside.iter().filter(|c| c.flags.noise).count();
    assert_eq!(hit, inside.len());
}

#[test]
fn noiseless_trace_has_no_noise_cut() {
    let mut rec = run(&NoiseConfig::quiet(), &ImpulseTrain::default(), 0.2, 12);
    assert_eq!(apply_noise_cut(&mut rec.candidates, 1.0).flagged, 0);
}

fn flat_candidates(n: usize) -> Vec<EventCandidate> {
    (0..n)
        .map(|w| EventCandidate {
            time: (w as f64 + 0.5) * SEARCH_WINDOW,
            amplitude: 0.0,
            abs_amplitude: 0.0,
            gof: 0.0,
            rms: 1.0,
            window: w,
            flags: CutFlags::default(),
        })
        .collect()
}

#[test]
fn stability_cut_on_constant_and_fluctuating_monitors() {
    let n = 200_000;
    let mut c = flat_candidates(n);
    assert_eq!(
        apply_stability_cut(&mut c, &vec![1.0; n], n, 1.0)
            .unwrap()
            .flagged,
        0
    );

    let sim = TraceSimulator::new(
        &osc(),
        &NoiseConfig::quiet(),
        &ImpulseTrain::default(),
        n as f64 * SEARCH_WINDOW,
        13,
    )
    .unwrap();
    let mut c = flat_candidates(n);
    let s = apply_stability_cut(&mut c, sim.monitor_power(), n, 1.0).unwrap();
    assert!(
        (s.fraction() - 0.159).abs() < 0.02,
        "flagged {}",
        s.fraction()
    );
}

#[test]
fn stability_cut_flags_a_power_sag() {
    let n = 100_000;
    let duration = n as f64 * SEARCH_WINDOW;
    let mut noise = NoiseConfig::quiet();
    noise.monitor.sags.push(PowerSag {
        start: 0.4 * duration,
        duration: 0.1 * duration,
        depth: 0.2,
    });
    let sim = TraceSimulator::new(&osc(), &noise, &ImpulseTrain::default(), duration, 14).unwrap();
    let mut c = flat_candidates(n);
    apply_stability_cut(&mut c, sim.monitor_power(), n, 1.0).unwrap();
    let sag = &c[(0.4 * n as f64) as usize + 1..(0.5 * n as f64) as usize - 1];
    assert!(sag.iter().all(|c| c.flags.stability));
}

#[test]
fn misaligned_monitor_is_an_error() {
    let mut c = flat_candidates(10);
    assert!(matches!(
        apply_stability_cut(&mut c, &[1.0; 9], 10, 1.0),
        Err(Error::Misaligned(_))
    ));
}

#[test]
fn template_peaks_at_the_pulse() {
    let cal = calibration();
    let t = &cal.template;
    assert!((t.at(0) - 1.0).abs() < 1e-12);
    let centre = (t.waveform.len() - 1) / 2;
    assert!(
        t.reference_index.abs_diff(centre) <= 1,
        "reference {} vs {centre}",
        t.reference_index
    );
    assert!(t.span >= 10.0 * osc().period());
    assert_eq!(t.n_pulses, 300);
}

#[test]
fn template_halves_agree() {
    let train = calibration_sweep(&[1040.0], 200, 0.025, 25e-6);
    let times = train.times();
    let mut sim = TraceSimulator::new(&osc(), noise60(), &train, 201.0 * 0.025, 31).unwrap();
    let f = filter();
    let idx: Vec<i64> = times.iter().map(|t| (t * 5e6).round() as i64).collect();
    let rec = reconstruct(&mut sim, &f, None, &ReconSettings::default(), &idx, 1200).unwrap();
    let (a, b) = rec.segments.split_at(100);
    let ta = build_template(a, &osc()).unwrap();
    let tb = build_template(b, &osc()).unwrap();
    // Standard error of a half-average, in template units.
    let se = SIGMA_Q / 1040.0 / (100f64).sqrt();
    for k in -1000i64..=1000 {
        let d = (ta.at(k) - tb.at(k)).abs();
        assert!(d < 5.0 * se * 2f64.sqrt(), "offset {k}: {d}");
    }
}

#[test]
fn template_needs_fifty_segments() {
    let segs = vec![vec![1.0; 2501]; 49];
    assert!(matches!(
        build_template(&segs, &osc()),
        Err(Error::InsufficientStatistics(_))
    ));
}

#[test]
fn gof_threshold_removes_two_percent_of_calibration_pulses() {
    let cal = calibration();
    let flagged =
        cal.gofs.iter().filter(|&&g| g > cal.gof_threshold).count() as f64 / cal.gofs.len() as f64;
    assert!((flagged - 0.02).abs() < 0.01, "flagged {flagged}");
}

#[test]
fn template_shaped_events_pass_the_gof_cut() {
    let cal = calibration();
    let train = ImpulseTrain::new(
        (0..200)
            .map(|k| {
                pulse(
                    0.007125 + k as f64 * 0.0123,
                    200.0 + 4.0 * k as f64,
                    ImpulseOrigin::Collision,
                )
            })
            .collect(),
    );
    let mut sim = TraceSimulator::new(&osc(), noise60(), &train, 2.5, 41).unwrap();
    let mut rec = reconstruct(
        &mut sim,
        &filter(),
        Some(&cal.template),
        &ReconSettings::default(),
        &[],
        0,
    )
    .unwrap();
    apply_gof_cut(&mut rec.candidates, cal.gof_threshold, ANALYSIS_THRESHOLD);
    let mut pass = 0;
    for p in train.iter() {
        let c = rec.pulse_reading(p.time, 0).unwrap();
        if !c.flags.gof {
            pass += 1;
        }
    }
    assert!(pass as f64 / 200.0 >= 0.97, "accepted {pass}/200");
}

#[test]
fn wrong_frequency_ring_fails_the_gof_cut() {
    let cal = calibration();
    let o = osc();
    let mut tr = simulate_trajectory(&o, noise60(), &ImpulseTrain::default(), 0.1, 42).unwrap();
    // A ring at twice the resonance with the amplitude of a large impulse.
    let t0 = 0.04;
    let k0 = (t0 * o.sample_rate) as usize;
    let amp = 800.0 * gasimpulse::units::KEV_C / (o.mass * o.omega_damped());
    for k in 0..20_000 {
        let t = k as f64 * o.dt();
        tr.samples[k0 + k] +=
            amp * (-0.5 * o.gamma() * t).exp() * (2.0 * o.omega_damped() * t).sin();
    }
    let mut rec = reconstruct(
        &mut tr.source(),
        &filter(),
        Some(&cal.template),
        &ReconSettings::default(),
        &[],
        0,
    )
    .unwrap();
    apply_gof_cut(&mut rec.candidates, cal.gof_threshold, ANALYSIS_THRESHOLD);
    let w = (t0 / SEARCH_WINDOW) as usize;
    let near: Vec<&EventCandidate> = rec.candidates[w.saturating_sub(1)..w + 3]
        .iter()
        .filter(|c| c.abs_amplitude >= ANALYSIS_THRESHOLD)
        .collect();
    assert!(!near.is_empty());
    assert!(near.iter().any(|c| c.flags.gof), "{near:?}");
}

#[test]
fn calibration_pulses_are_vetoed_and_nearby_events_survive() {
    let duration = 3.0;
    let cal = schedule_calibration_pulses(duration, 0.3, 1040.0).unwrap();
    let extra = ImpulseTrain::new(vec![pulse(0.601025, 700.0, ImpulseOrigin::Collision)]);
    let train = cal.merge(&extra);
    let mut rec = run(noise60(), &train, duration, 51);
    let found =
        veto_calibration(&mut rec.candidates, &cal.times(), SEARCH_WINDOW, 1, 900.0).unwrap();
    assert_eq!(found.len(), 9);
    for p in cal.iter() {
        let c = rec.pulse_reading(p.time, 1).unwrap();
        assert!(c.flags.calibration_veto);
    }
    let vetoed = rec
        .candidates
        .iter()
        .filter(|c| c.flags.calibration_veto)
        .count();
    assert_eq!(vetoed, 9 * 3);
    let survivor = rec.pulse_reading(0.601025, 0).unwrap();
    assert!(!survivor.flags.calibration_veto);
    assert!((survivor.amplitude - 700.0).abs() < 4.0 * SIGMA_Q);

    let mut rec2 = run(noise60(), &ImpulseTrain::default(), 0.2, 52);
    assert!(
        veto_calibration(&mut rec2.candidates, &[], SEARCH_WINDOW, 1, 900.0)
            .unwrap()
            .is_empty()
    );
    assert!(rec2.candidates.iter().all(|c| !c.flags.calibration_veto));
}

#[test]
fn missing_calibration_pulse_is_a_detector_error() {
    let mut rec = run(noise60(), &ImpulseTrain::default(), 0.7, 53);
    let r = veto_calibration(&mut rec.candidates, &[0.3, 0.6], SEARCH_WINDOW, 1, 900.0);
    assert!(matches!(r, Err(Error::DetectorResponse(_))));
}

#[test]
fn linearity_and_resolution_at_sixty() {
    let amps: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64).collect();
    let train = calibration_sweep(&amps, 100, 0.025, 25e-6);
    let duration = (train.len() + 1) as f64 * 0.025;
    let mut sim = TraceSimulator::new(&osc(), noise60(), &train, duration, 61).unwrap();
    let rec = reconstruct(&mut sim, &filter(), None, &ReconSettings::default(), &[], 0).unwrap();
    let mut groups: Vec<(f64, Vec<f64>)> = amps.iter().map(|&a| (a, Vec::new())).collect();
    for p in train.iter() {
        let g = amps.iter().position(|&a| a == p.amplitude).unwrap();
        groups[g]
            .1
            .push(rec.pulse_reading(p.time, 0).unwrap().amplitude);
    }
    let all = measure_resolution_and_linearity(&groups).unwrap();
    assert!(
        (0.98..=1.02).contains(&all.fit.slope),
        "slope {}",
        all.fit.slope
    );
    let high: Vec<(f64, Vec<f64>)> = groups.iter().filter(|g| g.0 >= 300.0).cloned().collect();
    let fit = measure_resolution_and_linearity(&high).unwrap().fit;
    assert!(
        fit.intercept.abs() <= 2.0 * fit.intercept_err,
        "intercept {} +- {}",
        fit.intercept,
        fit.intercept_err
    );
}

#[test]
fn resolution_does_not_depend_on_amplitude() {
    let train = calibration_sweep(&[400.0, 1040.0], 300, 0.025, 25e-6);
    let duration = (train.len() + 1) as f64 * 0.025;
    let mut sim = TraceSimulator::new(&osc(), noise60(), &train, duration, 62).unwrap();
    let rec = reconstruct(&mut sim, &filter(), None, &ReconSettings::default(), &[], 0).unwrap();
    let read = |q: f64| -> Vec<f64> {
        train
            .iter()
            .filter(|p| p.amplitude == q)
            .map(|p| rec.pulse_reading(p.time, 0).unwrap().amplitude)
            .collect()
    };
    let (s400, s1040) = (std_dev(&read(400.0)), std_dev(&read(1040.0)));
    assert!((s400 / s1040 - 1.0).abs() < 0.15, "{s400} vs {s1040}");
}

#[test]
fn noiseless_calibration_is_exact() {
    let amps = [100.0, 500.0, 1000.0];
    let train = calibration_sweep(&amps, 50, 0.01, 25e-6);
    let duration = (train.len() + 1) as f64 * 0.01;
    let mut sim = TraceSimulator::new(&osc(), &NoiseConfig::quiet(), &train, duration, 0).unwrap();
    let rec = reconstruct(&mut sim, &filter(), None, &ReconSettings::default(), &[], 0).unwrap();
    let groups: Vec<(f64, Vec<f64>)> = amps
        .iter()
        .map(|&a| {
            let v = train
                .iter()
                .filter(|p| p.amplitude == a)
                .map(|p| rec.pulse_reading(p.time, 0).unwrap().amplitude)
                .collect();
            (a, v)
        })
        .collect();
    let r = measure_resolution_and_linearity(&groups).unwrap();
    assert!((r.fit.slope - 1.0).abs() < 0.01);
    assert!(r.fit.intercept.abs() < 1.0);
    assert!(r.groups.iter().all(|g| g.sigma < 0.5));
}

#[test]
fn separated_pulses_reconstruct_independently() {
    let a = pulse(0.020125, 600.0, ImpulseOrigin::Collision);
    let b = pulse(0.026125, 450.0, ImpulseOrigin::Collision);
    let both = run(noise60(), &ImpulseTrain::new(vec![a, b]), 0.1, 71);
    let only_a = run(noise60(), &ImpulseTrain::new(vec![a]), 0.1, 71);
    let only_b = run(noise60(), &ImpulseTrain::new(vec![b]), 0.1, 71);
    for (p, alone) in [(a, &only_a), (b, &only_b)] {
        let x = both.pulse_reading(p.time, 0).unwrap().amplitude;
        let y = alone.pulse_reading(p.time, 0).unwrap().amplitude;
        assert!((x - y).abs() < SIGMA_Q, "{x} vs {y}");
    }
}

#[test]
fn binning_and_live_time() {
    let empty = bin_events(&[], &default_bin_edges(), 10.0).unwrap();
    assert_eq!(empty.total(), 0);
    assert_eq!(empty.n_bins(), 34);

    let mut c = flat_candidates(1000);
    for (i, x) in c.iter_mut().enumerate() {
        x.abs_amplitude = i as f64;
        x.amplitude = if i % 2 == 0 { i as f64 } else { -(i as f64) };
        if i % 10 < 3 {
            x.flags.noise = true;
        }
    }
    let live = live_time(&c, 1000, SEARCH_WINDOW);
    assert!((live.live - 0.7 * live.raw).abs() < 1e-12);
    let s = bin_events(&c, &default_bin_edges(), live.live).unwrap();
    let want = c
        .iter()
        .filter(|x| !x.flags.any() && x.abs_amplitude >= 150.0 && x.abs_amplitude < 1000.0)
        .count() as u64;
    assert_eq!(s.total(), want);
    assert!(bin_events(&c, &[150.0, 150.0, 200.0], 1.0).is_err());
}

#[test]
fn event_and_spectrum_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = flat_candidates(20);
    for (i, x) in c.iter_mut().enumerate() {
        x.amplitude = -3.25 * i as f64;
        x.abs_amplitude = x.amplitude.abs();
        x.gof = 0.1 * i as f64;
        x.flags = CutFlags::from_bits((i % 16) as u8);
    }
    let p = dir.path().join("events.csv");
    write_events_csv(&p, &c).unwrap();
    let back = read_events_csv(&p, SEARCH_WINDOW).unwrap();
    for (a, b) in c.iter().zip(&back) {
        assert_eq!(
            (a.time, a.amplitude, a.gof, a.flags, a.window),
            (b.time, b.amplitude, b.gof, b.flags, b.window)
        );
    }
    let mut s = bin_events(&c, &[0.0, 20.0, 70.0], 1.5).unwrap();
    s.meta.gas = "Xe".into();
    s.meta.cuts.insert("noise_fraction".into(), 0.16);
    let stem = dir.path().join("spec");
    s.save(&stem).unwrap();
    assert_eq!(BinnedSpectrum::load(&stem).unwrap(), s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn normalization_holds_across_the_calibration_range(q in 100.0f64..1000.0) {
        static PSD: OnceLock<NoisePsd> = OnceLock::new();
        let psd = PSD.get_or_init(noise_psd);
        let a = filtered_peak(&filter(), psd, q);
        prop_assert!((a / q - 1.0).abs() < 0.01, "q {} -> {}", q, a);
    }

    #[test]
    fn flags_round_trip_through_bits(b in 0u8..16) {
        prop_assert_eq!(CutFlags::from_bits(b).bits(), b);
        prop_assert_eq!(CutFlags::from_bits(b).removes_live_time(), b & 0b1011 != 0);
    }
}
