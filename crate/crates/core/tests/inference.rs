use gasimpulse::inference::*;
use gasimpulse::kinetics::{GasSpecies, ResponseTable, ResponseTableSpec};
use gasimpulse::recon::{bin_events, default_bin_edges, BinnedSpectrum};
use gasimpulse::units::Momentum;
use gasimpulse::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;
use std::sync::{Arc, OnceLock};

fn table(gas: GasSpecies) -> Arc<ResponseTable> {
    Arc::new(
        ResponseTable::build(ResponseTableSpec::new(gas, default_bin_edges(), 60.0, 60.0)).unwrap(),
    )
}

fn xenon_table() -> Arc<ResponseTable> {
    static T: OnceLock<Arc<ResponseTable>> = OnceLock::new();
    T.get_or_init(|| table(GasSpecies::xenon())).clone()
}

fn krypton_table() -> Arc<ResponseTable> {
    static T: OnceLock<Arc<ResponseTable>> = OnceLock::new();
    T.get_or_init(|| table(GasSpecies::krypton())).clone()
}

fn empty(live: f64, id: &str) -> BinnedSpectrum {
    let mut s = bin_events(&[], &default_bin_edges(), live).unwrap();
    s.meta.dataset_id = id.into();
    s.meta.raw_time = live;
    s
}

fn truth(alpha: f64, pressures: &[f64]) -> ModelParams {
    ModelParams {
        alpha,
        surface_temperature: 293.0,
        datasets: pressures
            .iter()
            .map(|&p| DatasetParams {
                pressure: p,
                sigma_q: 60.0,
                bg_amplitude: 3950.0,
                bg_mean: 55.0,
            })
            .collect(),
    }
}

/// Spectra drawn from the model itself. `seed = None` gives rounded expectations.
fn toy_model(
    table: Arc<ResponseTable>,
    params: &ModelParams,
    live: f64,
    seed: Option<u64>,
) -> JointModel {
    let n = params.datasets.len();
    let blank: Vec<FitDataset> = (0..n)
        .map(|i| FitDataset {
            spectrum: empty(live, &i.to_string()),
            sigma_cal: 60.0,
        })
        .collect();
    let base = JointModel::new(table.clone(), blank.clone(), ModelSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let filled = blank
        .into_iter()
        .enumerate()
        .map(|(i, mut d)| {
            let mu = base.expected_counts(i, params).unwrap();
            d.spectrum.counts = match seed {
                Some(_) => sample_counts(&mu, DEFAULT_OVERDISPERSION, &mut rng).unwrap(),
                None => mu.iter().map(|m| m.round() as u64).collect(),
            };
            d
        })
        .collect();
    JointModel::new(table, filled, ModelSettings::default()).unwrap()
}

fn poisson_log_pmf(k: u64, mu: f64) -> f64 {
    k as f64 * mu.ln() - mu - ln_gamma(k as f64 + 1.0)
}

#[test]
fn vanishing_overdispersion_recovers_poisson() {
    for k in 0..=50u64 {
        for mu in [0.1, 1.0, 4.5, 12.0, 30.0] {
            let p = poisson_log_pmf(k, mu);
            assert!((nb_log_pmf(k, mu, 0.0).unwrap() - p).abs() < 1e-12);
            assert!(
                (nb_log_pmf(k, mu, 1e-12).unwrap() - p).abs() < 1e-6,
                "k {k} mu {mu}"
            );
        }
    }
}

#[test]
fn negative_binomial_is_normalized() {
    let s: f64 = (0..=500)
        .map(|k| nb_log_pmf(k, 7.3, 0.05).unwrap().exp())
        .sum();
    assert!((s - 1.0).abs() < 1e-9, "sum {s}");
}

#[test]
fn large_counts_agree_with_direct_summation() {
    // Compare the closed forms against the explicit rising product.
    for (k, mu, delta) in [
        (5000u64, 4800.0, 0.05),
        (200, 180.0, 1e-9),
        (100, 90.0, 0.3),
    ] {
        let direct: f64 = (0..k).map(|i| (mu + i as f64 * delta).ln()).sum::<f64>()
            - ln_gamma(k as f64 + 1.0)
            - mu * f64::ln_1p(delta) / delta
            - k as f64 * f64::ln_1p(delta);
        let v = nb_log_pmf(k, mu, delta).unwrap();
        assert!(
            (v - direct).abs() < 1e-7 * direct.abs().max(1.0),
            "{v} vs {direct}"
        );
    }
}

#[test]
fn draws_have_the_stated_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 1_000_000;
    let x: Vec<f64> = (0..n)
        .map(|_| sample_nb(20.0, 0.05, &mut rng).unwrap() as f64)
        .collect();
    let m = x.iter().sum::<f64>() / n as f64;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((m - 20.0).abs() < 0.02, "mean {m}");
    assert!((v - 21.0).abs() < 0.1, "variance {v}");
}

#[test]
fn non_positive_expectation_is_a_domain_error() {
    assert!(matches!(nb_log_pmf(3, 0.0, 0.05), Err(Error::Domain(_))));
    assert!(matches!(nb_log_pmf(3, -1.0, 0.05), Err(Error::Domain(_))));
    assert!(matches!(nb_log_pmf(3, 1.0, -0.1), Err(Error::Domain(_))));
}

#[test]
fn single_bin_likelihood_peaks_near_the_count() {
    for k in [5u64, 20, 80] {
        let delta = 0.05;
        let (best, _) = (1..=4000)
            .map(|i| {
                let mu = k as f64 * (0.5 + i as f64 / 4000.0);
                (mu, nb_log_pmf(k, mu, delta).unwrap())
            })
            .fold(
                (0.0, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        // Overdispersion moves the mode in mu away from k by about delta / 2.
        assert!((best - k as f64).abs() <= delta * k as f64, "k {k}: {best}");
        assert!(
            (best - k as f64 - 0.5 * delta).abs() < 0.01 * k as f64,
            "k {k}: {best}"
        );
    }
}

#[test]
fn empty_spectrum_with_tiny_expectation_scores_near_zero() {
    let model = JointModel::new(
        xenon_table(),
        vec![FitDataset {
            spectrum: empty(1e-9, "0"),
            sigma_cal: 60.0,
        }],
        ModelSettings::default(),
    )
    .unwrap();
    let ll = model
        .dataset_log_likelihood(0, &truth(0.6, &[1e-8]))
        .unwrap();
    assert!(ll <= 0.0 && ll > -1e-3, "{ll}");
}

#[test]
fn truth_outscores_shifted_accommodation() {
    let p = truth(0.61, &[1e-7]);
    let model = toy_model(xenon_table(), &p, 21.6, Some(5));
    let at = |alpha: f64| {
        let mut q = p.clone();
        q.alpha = alpha;
        model.dataset_log_likelihood(0, &q).unwrap()
    };
    let t = at(0.61);
    assert!(
        t > at(0.31) && t > at(0.91),
        "{t} vs {} / {}",
        at(0.31),
        at(0.91)
    );
}

#[test]
fn prior_bounds_give_minus_infinity() {
    let model = toy_model(xenon_table(), &truth(0.6, &[5e-8]), 10.0, Some(1));
    for (alpha, ts) in [(1.1, 300.0), (-0.01, 300.0), (0.5, 280.0)] {
        let mut p = truth(alpha, &[5e-8]);
        p.surface_temperature = ts;
        assert_eq!(model.joint_log_posterior(&p), f64::NEG_INFINITY);
    }
    let mut p = truth(0.5, &[5e-8]);
    p.datasets[0].pressure = -1e-8;
    assert_eq!(model.joint_log_posterior(&p), f64::NEG_INFINITY);
    assert!(model.joint_log_posterior(&truth(0.5, &[5e-8])).is_finite());
}

#[test]
fn joint_posterior_is_the_sum_of_its_parts() {
    let p = truth(0.55, &[3e-8, 8e-8]);
    let model = toy_model(xenon_table(), &p, 10.0, Some(2));
    let mut q = p.clone();
    q.datasets[1].sigma_q = 66.0;
    let parts: f64 = (0..2)
        .map(|i| {
            model.dataset_log_likelihood(i, &q).unwrap()
                + model.constraint_log_density(i, q.datasets[i].sigma_q)
        })
        .sum();
    assert_eq!(model.joint_log_posterior(&q), parts);

    let single = toy_model(xenon_table(), &truth(0.55, &[3e-8]), 10.0, Some(2));
    let s = truth(0.55, &[3e-8]);
    assert_eq!(
        single.joint_log_posterior(&s),
        single.dataset_log_likelihood(0, &s).unwrap() + single.constraint_log_density(0, 60.0)
    );
}

#[test]
fn multinomial_form_sees_only_the_shape() {
    let p = truth(0.6, &[5e-8]);
    let base = toy_model(xenon_table(), &p, 20.0, Some(3));
    let settings = ModelSettings {
        form: LikelihoodForm::Multinomial,
        ..ModelSettings::default()
    };
    let model = JointModel::new(xenon_table(), base.datasets().to_vec(), settings).unwrap();
    let mut q = p.clone();
    q.datasets[0].pressure *= 2.0;
    q.datasets[0].bg_amplitude *= 2.0;
    let a = model.dataset_log_likelihood(0, &p).unwrap();
    let b = model.dataset_log_likelihood(0, &q).unwrap();
    assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
    assert!(
        (base.dataset_log_likelihood(0, &p).unwrap() - base.dataset_log_likelihood(0, &q).unwrap())
            .abs()
            > 1.0
    );
}

#[test]
fn likelihood_differences_survive_a_unit_round_trip() {
    let si_edges: Vec<f64> = default_bin_edges()
        .iter()
        .map(|&e| Momentum::from_kev_c(e).si())
        .collect();
    let back: Vec<f64> = si_edges
        .iter()
        .map(|&e| Momentum::from_si(e).kev_c())
        .collect();
    let p = truth(0.6, &[5e-8]);
    let model = toy_model(xenon_table(), &p, 20.0, Some(4));
    let other = Arc::new(
        ResponseTable::build(ResponseTableSpec::new(
            GasSpecies::xenon(),
            back.clone(),
            60.0,
            60.0,
        ))
        .unwrap(),
    );
    let mut data = model.datasets().to_vec();
    data[0].spectrum.bin_edges = back;
    let twin = JointModel::new(other, data, ModelSettings::default()).unwrap();
    let q = truth(0.4, &[6e-8]);
    let d1 = model.joint_log_posterior(&p) - model.joint_log_posterior(&q);
    let d2 = twin.joint_log_posterior(&p) - twin.joint_log_posterior(&q);
    assert!((d1 - d2).abs() < 1e-9, "{d1} vs {d2}");
}

#[test]
fn map_fit_returns_truth_on_noise_free_counts() {
    let p = truth(0.55, &[5e-8, 1e-7]);
    let model = toy_model(xenon_table(), &p, 1e4, None);
    let fit = fit_map(&model, &p, &NelderMeadSettings::default()).unwrap();
    assert!((fit.params.alpha - 0.55).abs() < 5e-3, "{:?}", fit.params);
    for (a, b) in fit.params.datasets.iter().zip(&p.datasets) {
        assert!(
            (a.pressure / b.pressure - 1.0).abs() < 5e-3,
            "{:?}",
            fit.params
        );
        assert!((a.sigma_q - b.sigma_q).abs() < 0.5);
    }
    assert!(fit.log_posterior >= model.joint_log_posterior(&p) - 1e-6);
}

#[test]
fn krypton_joint_fit_recovers_accommodation() {
    let p = truth(0.55, &[5e-8, 7.5e-8, 1e-7]);
    let model = toy_model(krypton_table(), &p, 200.0, Some(11));
    let init = model
        .initial_guess(0.5, 300.0, &[5e-8, 7.5e-8, 1e-7])
        .unwrap();
    let fit = fit_map(&model, &init, &NelderMeadSettings::default()).unwrap();
    assert!((fit.params.alpha - 0.55).abs() <= 0.15, "{:?}", fit.params);

    // Starting points spread by a factor of ten land on the same optimum. The
    // alpha / T_s / pressure ridge is nearly flat, so the optimum is pinned
    // tightly in log-posterior and only loosely along the ridge.
    for (alpha, ts, scale) in [(0.1, 500.0, 10.0), (0.9, 293.0, 0.1)] {
        let far = model
            .initial_guess(alpha, ts, &[5e-8 * scale, 7.5e-8 * scale, 1e-7 * scale])
            .unwrap();
        let other = fit_map(&model, &far, &NelderMeadSettings::default()).unwrap();
        assert!(
            (other.log_posterior - fit.log_posterior).abs() < 1e-3,
            "{} vs {}",
            other.log_posterior,
            fit.log_posterior
        );
        assert!((other.params.alpha - fit.params.alpha).abs() < 0.05);
        for (a, b) in other.params.datasets.iter().zip(&fit.params.datasets) {
            assert!((a.pressure / b.pressure - 1.0).abs() < 0.1);
        }
    }
}

#[test]
fn nelder_mead_reports_non_convergence_with_state() {
    let settings = NelderMeadSettings {
        max_evaluations: 30,
        ..NelderMeadSettings::default()
    };
    let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = minimize_bounded(
        rosen,
        &[-1.5, 2.0],
        &[-5.0, -5.0],
        &[5.0, 5.0],
        &[0.5, 0.5],
        &settings,
    );
    match r {
        Err(Error::NonConvergence {
            state,
            gradient_norm,
            ..
        }) => {
            assert_eq!(state.len(), 2);
            assert!(gradient_norm > 0.0);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
    let ok = minimize_bounded(
        rosen,
        &[-1.5, 2.0],
        &[-5.0, -5.0],
        &[5.0, 5.0],
        &[0.5, 0.5],
        &NelderMeadSettings::default(),
    )
    .unwrap();
    assert!((ok.x[0] - 1.0).abs() < 1e-3 && (ok.x[1] - 1.0).abs() < 1e-3);
    // Minimum outside the box lands on the boundary.
    let edge = minimize_bounded(
        rosen,
        &[0.2, 0.2],
        &[-1.0, -1.0],
        &[0.5, 0.5],
        &[0.1, 0.1],
        &NelderMeadSettings::default(),
    )
    .unwrap();
    assert!((edge.x[0] - 0.5).abs() < 1e-4, "{:?}", edge.x);
}

#[test]
fn sampler_reproduces_a_correlated_gaussian() {
    let (m, s, rho) = ([1.0, -2.0], [1.0, 2.0], 0.6);
    let det = 1.0 - rho * rho;
    let lp = |x: &[f64]| {
        let (a, b) = ((x[0] - m[0]) / s[0], (x[1] - m[1]) / s[1]);
        -0.5 * (a * a - 2.0 * rho * a * b + b * b) / det
    };
    let settings = McmcSettings {
        n_steps: 20_000,
        burn_in: 2000,
        seed: 7,
        ..McmcSettings::default()
    };
    let post = run_ensemble(
        lp,
        vec!["a".into(), "b".into()],
        &[0.0, 0.0],
        &[1.0, 1.0],
        &[-100.0, -100.0],
        &[100.0, 100.0],
        &settings,
    )
    .unwrap();
    assert!(post.converged, "rhat {:?} ess {:?}", post.rhat, post.ess);
    let a = post.column(0);
    let b = post.column(1);
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let vaa = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vbb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let vab = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    assert!(
        (ma - m[0]).abs() < 0.02 * s[0] && (mb - m[1]).abs() < 0.02 * s[1],
        "means {ma} {mb}"
    );
    assert!((vaa / 1.0 - 1.0).abs() < 0.02, "var a {vaa}");
    assert!((vbb / 4.0 - 1.0).abs() < 0.02, "var b {vbb}");
    assert!((vab / (rho * 2.0) - 1.0).abs() < 0.02, "cov {vab}");
}

/// Kolmogorov-Smirnov statistic sqrt(n) D of thinned draws against a unit
/// Gaussian truncated to `x >= cut`.
fn truncated_gaussian_ks(post: &Posterior, cut: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal as SNormal};
    let chains: Vec<Vec<f64>> = (0..post.n_walkers)
        .map(|k| {
            (0..post.n_kept)
                .map(|s| post.samples[s * post.n_walkers + k])
                .collect()
        })
        .collect();
    assert!(chains.iter().flatten().all(|&x| x >= cut));
    // Thin to roughly independent draws before the Kolmogorov-Smirnov test.
    let stride = (2.0 * autocorrelation_time(&chains)).ceil() as usize;
    let mut x: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.iter().step_by(stride).copied())
        .collect();
    x.sort_by(f64::total_cmp);
    let norm = SNormal::new(0.0, 1.0).unwrap();
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

fn truncation_settings() -> McmcSettings {
    McmcSettings {
        n_steps: 20_000,
        burn_in: 2000,
        seed: 3,
        ..McmcSettings::default()
    }
}

#[test]
fn truncated_sampling_matches_the_analytic_density() {
    let cut = 0.5;
    let post = run_ensemble(
        |x: &[f64]| -0.5 * x[0] * x[0],
        vec!["x".into()],
        &[1.0],
        &[1.0],
        &[cut],
        &[20.0],
        &truncation_settings(),
    )
    .unwrap();
    assert!(post.converged);
    // Asymptotic Kolmogorov distribution, p > 0.01.
    let ks = truncated_gaussian_ks(&post, cut);
    assert!(ks < 1.628, "sqrt(n) D = {ks}");
}

#[test]
fn logit_mapped_sampling_matches_the_analytic_density() {
    let (cut, top) = (0.5, 20.0);
    let post = run_mapped(
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
        &truncation_settings(),
    )
    .unwrap();
    assert!(post.converged, "rhat {:?} ess {:?}", post.rhat, post.ess);
    let ks = truncated_gaussian_ks(&post, cut);
    assert!(ks < 1.628, "sqrt(n) D = {ks}");
    assert!((post.log_prob[0] + 0.5 * post.samples[0].powi(2)).abs() < 1e-9);
}

#[test]
fn sampler_rejects_too_few_chains() {
    let s = McmcSettings {
        n_chains: 3,
        ..McmcSettings::default()
    };
    let r = run_ensemble(
        |_: &[f64]| 0.0,
        vec!["x".into()],
        &[0.5],
        &[0.1],
        &[0.0],
        &[1.0],
        &s,
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn split_rhat_flags_disagreeing_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Normal::new(0.0, 1.0).unwrap();
    let same: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..2000).map(|_| g.sample(&mut rng)).collect())
        .collect();
    assert!((split_rhat(&same) - 1.0).abs() < 0.01);
    let shifted: Vec<Vec<f64>> = same
        .iter()
        .enumerate()
        .map(|(i, c)| c.iter().map(|x| x + i as f64).collect())
        .collect();
    assert!(split_rhat(&shifted) > 1.5);
    assert!((effective_sample_size(&same) / 8000.0 - 1.0).abs() < 0.2);
}

fn layout_draws(alpha: impl Fn(usize) -> f64, n: usize) -> Posterior {
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![alpha(i), 293.0 + (i % 100) as f64, 5e-8, 60.0, 4000.0, 50.0])
        .collect();
    Posterior::from_draws(ModelParams::names(1), &draws).unwrap()
}

#[test]
fn uniform_accommodation_gives_the_central_band() {
    let n = 100_001;
    let s = summarize(
        &layout_draws(|i| i as f64 / (n - 1) as f64, n),
        "Xe",
        &["a".into()],
    )
    .unwrap();
    assert!((s.alpha_lo - 0.16).abs() < 0.01 && (s.alpha_hi - 0.84).abs() < 0.01);
    assert!((s.alpha_med - 0.5).abs() < 0.01);
    assert!(s.ts_ul_95 >= 293.0 && s.ts_ul_95 <= 392.0);
    assert_eq!(s.datasets[0].dataset_id, "a");
}

#[test]
fn degenerate_samples_give_zero_width() {
    let s = summarize(&layout_draws(|_| 0.42, 50), "Kr", &[]).unwrap();
    assert_eq!((s.alpha_lo, s.alpha_med, s.alpha_hi), (0.42, 0.42, 0.42));
    assert_eq!(s.datasets[0].pressure.lo, s.datasets[0].pressure.hi);
}

fn estimates(values: &[f64], err: f64) -> Vec<PressureEstimate> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| PressureEstimate {
            dataset_id: i.to_string(),
            pressure: Interval {
                lo: v - err,
                median: v,
                hi: v + err,
            },
        })
        .collect()
}

#[test]
fn identical_gauge_readings_give_unit_slope() {
    let p = [2e-8, 5e-8, 1e-7];
    let c = compare_to_gauge(&estimates(&p, 5e-9), &p).unwrap();
    assert!((c.fit.slope - 1.0).abs() < 1e-9 && c.fit.intercept.abs() < 1e-18);
}

#[test]
fn gauge_offset_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let truth = [2e-8, 4e-8, 6e-8, 8e-8, 1e-7];
    let err = 4e-9;
    let offset = 1.5e-8;
    let g = Normal::new(0.0, err).unwrap();
    let gauge: Vec<f64> = truth.iter().map(|t| t + offset).collect();
    let trials = 1000;
    let mut covered = 0;
    let mut mean = 0.0;
    for _ in 0..trials {
        let est: Vec<f64> = truth.iter().map(|t| t + g.sample(&mut rng)).collect();
        let c = compare_to_gauge(&estimates(&est, err), &gauge).unwrap();
        covered += ((c.zero_offset - offset).abs() <= c.zero_offset_err) as usize;
        mean += c.zero_offset / trials as f64;
    }
    // The 68% error bar covers the constructed offset at its nominal rate.
    let rate = covered as f64 / trials as f64;
    assert!((rate - 0.68).abs() < 0.05, "coverage {rate}");
    assert!((mean - offset).abs() < 0.1 * offset, "mean offset {mean}");
    let est = estimates(&truth, err);
    assert!(matches!(
        compare_to_gauge(&est, &gauge[..3]),
        Err(Error::Misaligned(_))
    ));
}

#[test]
fn floor_falls_with_exposure_and_signal_is_detected() {
    let bg = truth(0.6, &[1e-13]);
    let settings = SensitivitySettings::default();
    let floor_at = |live: f64| {
        let m = toy_model(xenon_table(), &bg, live, None);
        background_only_fit(
            xenon_table(),
            m.datasets()[0].clone(),
            ModelSettings::default(),
            &settings,
        )
        .unwrap()
    };
    let short = floor_at(60.0);
    let long = floor_at(120.0);
    assert!(short.floor_pressure.is_finite());
    assert!(
        long.floor_pressure < short.floor_pressure,
        "{} vs {}",
        long.floor_pressure,
        short.floor_pressure
    );
    assert!(!short.background_rejected);

    let injected = truth(0.6, &[10.0 * short.floor_pressure]);
    let m = toy_model(xenon_table(), &injected, 60.0, None);
    let fit = background_only_fit(
        xenon_table(),
        m.datasets()[0].clone(),
        ModelSettings::default(),
        &settings,
    )
    .unwrap();
    assert!(
        fit.background_rejected && fit.lr_statistic > 2.71,
        "{}",
        fit.lr_statistic
    );
}

#[test]
fn tail_significance_matches_scipy() {
    // Poisson limit: P(X >= 5 | 1) = 3.6598e-3 and P(X <= 0 | 1) = e^-1.
    assert!((nb_tail_significance(5, 1.0, 0.0).unwrap() - 2.681_938).abs() < 1e-4);
    assert!((nb_tail_significance(0, 1.0, 0.0).unwrap() + 0.337_475).abs() < 1e-4);
    // Overdispersed: mu = 20, delta = 0.05 (r = 400, p = 1 / 1.05).
    assert!((nb_tail_significance(35, 20.0, 0.05).unwrap() - 2.887_295).abs() < 1e-4);
    assert!((nb_tail_significance(8, 20.0, 0.05).unwrap() + 2.806_825).abs() < 1e-4);
    assert_eq!(nb_tail_significance(20, 20.0, 0.05).unwrap(), 0.0);
    // A single count at tiny expectation is unremarkable in a Gaussian sense
    // only if the tail is computed exactly.
    let z = nb_tail_significance(1, 0.02, 0.05).unwrap();
    assert!(z > 2.0 && z < 2.5, "{z}");
}

#[test]
fn fixed_signal_fit_scores_truth_as_consistent() {
    let p = truth(0.6, &[1e-7]);
    let model = toy_model(xenon_table(), &p, 30.0, Some(3));
    let fit_at = |pressure: f64| {
        fixed_signal_fit(
            xenon_table(),
            model.datasets()[0].clone(),
            ModelSettings::default(),
            0.6,
            293.0,
            pressure,
            &NelderMeadSettings::default(),
        )
        .unwrap()
    };
    let at_truth = fit_at(1e-7);
    assert!(
        at_truth.max_abs_significance < 3.5,
        "{}",
        at_truth.max_abs_significance
    );
    assert_eq!(
        at_truth.expected.len(),
        model.datasets()[0].spectrum.counts.len()
    );
    let wrong = fit_at(5e-7);
    assert!(wrong.log_likelihood < at_truth.log_likelihood - 10.0);
    assert!(
        wrong.max_abs_significance > 3.0,
        "{}",
        wrong.max_abs_significance
    );
}

#[test]
fn total_signal_rate_is_the_bin_sum() {
    let t = xenon_table();
    let mut bins = vec![0.0; t.n_bins()];
    for (alpha, ts, sigma) in [(0.0, 293.0, 60.0), (0.6, 351.5, 57.3), (1.0, 700.0, 80.0)] {
        t.signal_rates(alpha, ts, 2e-8, sigma, &mut bins).unwrap();
        let total = t.total_signal_rate(alpha, ts, 2e-8, sigma).unwrap();
        assert!((total / bins.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reparameterized_sampling_targets_the_model_posterior() {
    // Well-constrained problem where plain box sampling mixes well: both
    // samplers must agree within Monte Carlo error.
    let p = truth(0.6, &[1e-7]);
    let model = toy_model(xenon_table(), &p, 300.0, Some(5));
    let map = fit_map(&model, &p, &NelderMeadSettings::default()).unwrap();
    let settings = McmcSettings {
        n_steps: 8000,
        burn_in: 2000,
        seed: 3,
        ..McmcSettings::default()
    };
    let fast = run_mcmc(&model, &map.params, &settings).unwrap();
    let (lo, hi) = model.bounds();
    let plain = run_ensemble(
        |v: &[f64]| model.log_posterior(v),
        ModelParams::names(1),
        &map.params.to_vec(),
        &default_scales(&model, &map.params),
        &lo,
        &hi,
        &settings,
    )
    .unwrap();
    assert!(fast.converged, "rhat {:?} ess {:?}", fast.rhat, fast.ess);
    for (j, name) in fast.names.iter().enumerate() {
        let stats = |post: &Posterior| {
            let c = post.column(j);
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (m, v.sqrt(), v / post.ess[j])
        };
        let (m1, s1, e1) = stats(&fast);
        let (m2, s2, e2) = stats(&plain);
        let z = (m1 - m2) / (e1 + e2).sqrt();
        assert!(z.abs() < 4.5, "{name}: means {m1} vs {m2} (z = {z})");
        assert!((s1 / s2 - 1.0).abs() < 0.2, "{name}: widths {s1} vs {s2}");
    }
    // Log-probabilities are reported in model coordinates.
    for i in (0..fast.n_samples()).step_by(997) {
        let lp = model.log_posterior(fast.sample(i));
        assert!((fast.log_prob[i] - lp).abs() < 1e-6 * lp.abs().max(1.0));
    }
}

#[test]
fn unconverged_runs_are_extended() {
    let p = truth(0.6, &[1e-7]);
    let model = toy_model(xenon_table(), &p, 300.0, Some(5));
    let map = fit_map(&model, &p, &NelderMeadSettings::default()).unwrap();
    let short = McmcSettings {
        n_steps: 300,
        burn_in: 100,
        seed: 3,
        extensions: 0,
        ..McmcSettings::default()
    };
    let once = run_mcmc(&model, &map.params, &short).unwrap();
    assert!(!once.converged);
    assert_eq!(once.n_kept, 200);
    let extended = run_mcmc(
        &model,
        &map.params,
        &McmcSettings {
            extensions: 5,
            ..short
        },
    )
    .unwrap();
    assert!(
        extended.converged,
        "rhat {:?} ess {:?}",
        extended.rhat, extended.ess
    );
    assert!(extended.n_kept >= 400 && (extended.n_kept / 200).is_power_of_two());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn negative_binomial_mean_is_mu(mu in 0.5f64..30.0, delta in 0.0f64..0.5) {
        let (s0, s1) = (0..2000u64).fold((0.0, 0.0), |(a, b), k| {
            let p = nb_log_pmf(k, mu, delta).unwrap().exp();
            (a + p, b + k as f64 * p)
        });
        prop_assert!((s0 - 1.0).abs() < 1e-9);
        prop_assert!((s1 - mu).abs() < 1e-7 * mu);
    }

    #[test]
    fn samples_respect_the_prior_box(alpha in -0.5f64..1.5, ts in 250.0f64..1100.0) {
        let model = toy_model(xenon_table(), &truth(0.6, &[5e-8]), 5.0, Some(1));
        let mut p = truth(alpha, &[5e-8]);
        p.surface_temperature = ts;
        let inside = (0.0..=1.0).contains(&alpha) && (293.0..=1000.0).contains(&ts);
        prop_assert_eq!(model.joint_log_posterior(&p).is_finite(), inside);
    }
}
