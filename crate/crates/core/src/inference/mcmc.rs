//! Ensemble sampler mixing affine-invariant stretch moves with
//! differential-evolution proposals, plus split-R-hat and
//! autocorrelation-based effective sample size.

use super::model::{JointModel, ModelParams};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Steps per walker, including burn-in.
    pub n_steps: usize,
    /// Lower bound on the number of walkers; at least `2 dim + 2` are used.
    pub n_chains: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Stretch scale `a`.
    pub stretch: f64,
    /// Fraction of updates using a differential-evolution proposal instead of
    /// the stretch move.
    pub de_fraction: f64,
    /// Initial spread around the start point as a fraction of each scale.
    pub jitter: f64,
    pub rhat_max: f64,
    pub ess_min: f64,
    /// `run_mcmc` reruns a fit that misses `rhat_max` or `ess_min` with
    /// doubled steps and burn-in, at most this many times.
    pub extensions: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            n_steps: 20_000,
            n_chains: 32,
            burn_in: 5000,
            seed: 1,
            stretch: 2.0,
            de_fraction: 0.9,
            jitter: 0.01,
            rhat_max: 1.05,
            ess_min: 500.0,
            extensions: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub names: Vec<String>,
    pub n_walkers: usize,
    /// Kept steps per walker.
    pub n_kept: usize,
    /// `[step][walker][dim]`, burn-in removed.
    pub samples: Vec<f64>,
    /// `[step][walker]`.
    pub log_prob: Vec<f64>,
    pub acceptance: f64,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub converged: bool,
}

impl Posterior {
    /// Wraps independent draws, e.g. for summarizing externally produced samples.
    pub fn from_draws(names: Vec<String>, draws: &[Vec<f64>]) -> Result<Self> {
        let d = names.len();
        if draws.iter().any(|x| x.len() != d) {
            return Err(Error::Domain(
                "draw length differs from the number of names".into(),
            ));
        }
        let n = draws.len();
        Ok(Posterior {
            names,
            n_walkers: 1,
            n_kept: n,
            samples: draws.iter().flatten().copied().collect(),
            log_prob: vec![0.0; n],
            acceptance: 1.0,
            rhat: vec![1.0; d],
            ess: vec![n as f64; d],
            converged: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_kept * self.n_walkers
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.samples[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(j)
            .step_by(self.dim())
            .copied()
            .collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.column(j))
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Errors unless every parameter passed the diagnostics.
    pub fn check(&self) -> Result<()> {
        if self.converged {
            return Ok(());
        }
        Err(Error::NonConvergence {
            message: format!(
                "MCMC diagnostics failed: max R-hat {:.4}, min ESS {:.0}",
                self.max_rhat(),
                self.min_ess()
            ),
            state: self.column_means(),
            gradient_norm: f64::NAN,
        })
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.column(j).iter().sum::<f64>() / self.n_samples() as f64)
            .collect()
    }

    /// Columnar CSV: step, walker, log_prob, then one column per parameter.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# schema_version={}", crate::schema::VERSION)?;
        writeln!(w, "step,walker,log_prob,{}", self.names.join(","))?;
        for s in 0..self.n_kept {
            for k in 0..self.n_walkers {
                let i = s * self.n_walkers + k;
                write!(w, "{s},{k},{}", self.log_prob[i])?;
                for v in self.sample(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Walker {
    x: Vec<f64>,
    lp: f64,
    rng: ChaCha8Rng,
    accepted: usize,
}

fn ensemble_update<F: Fn(&[f64]) -> f64 + Sync>(
    movers: &mut [Walker],
    partners: &[Walker],
    settings: &McmcSettings,
    log_prob: &F,
    lo: &[f64],
    hi: &[f64],
) {
    let n = lo.len() as f64;
    let a = settings.stretch;
    movers.par_iter_mut().for_each(|w| {
        let (y, log_jacobian) = if w.rng.gen::<f64>() < settings.de_fraction && partners.len() >= 2
        {
            // Differential evolution: x + g (x_j - x_k), occasionally g = 1.
            let j = w.rng.gen_range(0..partners.len());
            let mut k = w.rng.gen_range(0..partners.len() - 1);
            if k >= j {
                k += 1;
            }
            let g = if w.rng.gen::<f64>() < 0.1 {
                1.0
            } else {
                2.38 / (2.0 * n).sqrt() * (1.0 + 1e-4 * w.rng.sample::<f64, _>(StandardNormal))
            };
            let y: Vec<f64> = (0..lo.len())
                .map(|i| w.x[i] + g * (partners[j].x[i] - partners[k].x[i]))
                .collect();
            (y, 0.0)
        } else {
            let u: f64 = w.rng.gen();
            let z = ((a - 1.0) * u + 1.0).powi(2) / a;
            let j = w.rng.gen_range(0..partners.len());
            let y: Vec<f64> =
                w.x.iter()
                    .zip(&partners[j].x)
                    .map(|(xk, xj)| xj + z * (xk - xj))
                    .collect();
            (y, (n - 1.0) * z.ln())
        };
        let inside = y
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h);
        let lp = if inside {
            log_prob(&y)
        } else {
            f64::NEG_INFINITY
        };
        let log_accept = log_jacobian + lp - w.lp;
        let r: f64 = w.rng.gen();
        if lp.is_finite() && r.ln() < log_accept {
            w.x = y;
            w.lp = lp;
            w.accepted += 1;
        }
    });
}

/// Samples `log_prob` inside the box `[lo, hi]`; proposals outside are
/// rejected. Walkers start at `init` jittered by `settings.jitter * scale`.
pub fn run_ensemble<F: Fn(&[f64]) -> f64 + Sync>(
    log_prob: F,
    names: Vec<String>,
    init: &[f64],
    scale: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &McmcSettings,
) -> Result<Posterior> {
    let d = init.len();
    if names.len() != d || scale.len() != d || lo.len() != d || hi.len() != d {
        return Err(Error::Domain("dimension mismatch in sampler setup".into()));
    }
    if settings.n_chains < 4 {
        return Err(Error::Config(format!(
            "need at least 4 chains, got {}",
            settings.n_chains
        )));
    }
    if settings.burn_in + 4 > settings.n_steps {
        return Err(Error::Config(
            "burn-in leaves fewer than 4 kept steps".into(),
        ));
    }
    if !(settings.stretch > 1.0) {
        return Err(Error::Config("stretch scale must exceed 1".into()));
    }
    let mut n_walkers = settings.n_chains.max(2 * d + 2);
    n_walkers += n_walkers % 2;

    let mut walkers = Vec::with_capacity(n_walkers);
    for k in 0..n_walkers {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(k as u64);
        let mut placed = None;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let g: f64 = rng.sample(StandardNormal);
                    init[i] + settings.jitter * scale[i] * g
                })
                .collect();
            if x.iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
            {
                let lp = log_prob(&x);
                if lp.is_finite() {
                    placed = Some((x, lp));
                    break;
                }
            }
        }
        let (x, lp) = placed.ok_or_else(|| {
            Error::Domain("could not place walkers with finite log-probability".into())
        })?;
        walkers.push(Walker {
            x,
            lp,
            rng,
            accepted: 0,
        });
    }

    let half = n_walkers / 2;
    let n_kept = settings.n_steps - settings.burn_in;
    let mut samples = Vec::with_capacity(n_kept * n_walkers * d);
    let mut lps = Vec::with_capacity(n_kept * n_walkers);
    for step in 0..settings.n_steps {
        {
            let (a, b) = walkers.split_at_mut(half);
            ensemble_update(a, b, settings, &log_prob, lo, hi);
            ensemble_update(b, a, settings, &log_prob, lo, hi);
        }
        if step >= settings.burn_in {
            for w in &walkers {
                samples.extend_from_slice(&w.x);
                lps.push(w.lp);
            }
        }
    }
    let accepted: usize = walkers.iter().map(|w| w.accepted).sum();

    let mut post = Posterior {
        names,
        n_walkers,
        n_kept,
        samples,
        log_prob: lps,
        acceptance: accepted as f64 / (n_walkers * settings.n_steps) as f64,
        rhat: Vec::new(),
        ess: Vec::new(),
        converged: false,
    };
    post.update_diagnostics(settings);
    Ok(post)
}

impl Posterior {
    /// Recomputes split R-hat, ESS and the convergence flag from the stored
    /// walker chains.
    pub fn update_diagnostics(&mut self, settings: &McmcSettings) {
        let d = self.dim();
        let (nw, nk) = (self.n_walkers, self.n_kept);
        let chains: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|j| {
                (0..nw)
                    .map(|k| {
                        (0..nk)
                            .map(|s| self.samples[(s * nw + k) * d + j])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        self.rhat = chains.iter().map(|c| split_rhat(c)).collect();
        self.ess = chains.iter().map(|c| effective_sample_size(c)).collect();
        self.converged = self.rhat.iter().all(|r| *r <= settings.rhat_max)
            && self.ess.iter().all(|e| *e >= settings.ess_min);
    }
}

/// Gelman-Rubin statistic over chains cut in half.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n..2 * n]])
        .collect();
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var = (nf - 1.0) / nf * w + b / nf;
    (var / w).sqrt()
}

/// Integrated autocorrelation time from the walker-averaged autocorrelation
/// function, truncated with Sokal's window `M >= 5 tau`.
pub fn autocorrelation_time(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return f64::NAN;
    }
    let len = (2 * n).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut acf = vec![0.0; n];
    let mut buf = fwd.make_input_vec();
    let mut spec = fwd.make_output_vec();
    let mut out = inv.make_output_vec();
    for c in chains {
        let mu = c[..n].iter().sum::<f64>() / n as f64;
        buf.iter_mut().for_each(|b| *b = 0.0);
        for (b, x) in buf.iter_mut().zip(&c[..n]) {
            *b = x - mu;
        }
        fwd.process(&mut buf, &mut spec).expect("fft length");
        spec.iter_mut().for_each(|z| *z = z.norm_sqr().into());
        inv.process(&mut spec, &mut out).expect("fft length");
        for (a, o) in acf.iter_mut().zip(&out) {
            *a += o;
        }
    }
    if acf[0] <= 0.0 {
        return 1.0;
    }
    let c0 = acf[0];
    let mut tau = 1.0;
    for m in 1..n {
        tau += 2.0 * acf[m] / c0;
        if m as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    (chains.len() * n) as f64 / autocorrelation_time(chains)
}

/// Per-parameter sampling scales around a MAP point.
pub fn default_scales(model: &JointModel, at: &ModelParams) -> Vec<f64> {
    let mut s = vec![0.1, 20.0];
    for d in &at.datasets {
        s.extend([0.1 * d.pressure, 3.0, 0.05 * d.bg_amplitude.max(1.0), 5.0]);
    }
    debug_assert_eq!(s.len(), model.dim());
    s
}

/// Logit map from the real line onto `(lo, hi)`.
pub fn logit_to_box(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

/// Inverse of [`logit_to_box`]; points on the boundary are nudged inside.
pub fn box_to_logit(x: f64, lo: f64, hi: f64) -> f64 {
    let t = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (t / (1.0 - t)).ln()
}

/// log |dx/du| of [`logit_to_box`].
pub fn logit_log_jacobian(u: f64, lo: f64, hi: f64) -> f64 {
    (hi - lo).ln() - u.abs() - 2.0 * (-u.abs()).exp().ln_1p()
}

/// Samples `log_prob` (a density in model coordinates) while the walkers
/// move in sampler coordinates `u`. `to_model` returns the model point and
/// log |dx/du|, or `None` outside the support. Samples, log-probabilities
/// and diagnostics are reported in model coordinates.
pub fn run_mapped<F, M>(
    log_prob: F,
    to_model: M,
    names: Vec<String>,
    u0: &[f64],
    scale: &[f64],
    settings: &McmcSettings,
) -> Result<Posterior>
where
    F: Fn(&[f64]) -> f64 + Sync,
    M: Fn(&[f64]) -> Option<(Vec<f64>, f64)> + Sync,
{
    let d = u0.len();
    let open = vec![f64::INFINITY; d];
    let neg = vec![f64::NEG_INFINITY; d];
    let mut post = run_ensemble(
        |u: &[f64]| match to_model(u) {
            Some((x, jac)) => log_prob(&x) + jac,
            None => f64::NEG_INFINITY,
        },
        names,
        u0,
        scale,
        &neg,
        &open,
        settings,
    )?;
    for (k, lp) in post.log_prob.iter_mut().enumerate() {
        let u = &mut post.samples[k * d..(k + 1) * d];
        let (x, jac) = to_model(u)
            .ok_or_else(|| Error::Domain("accepted sample outside the support".into()))?;
        *lp -= jac;
        u.copy_from_slice(&x);
    }
    post.update_diagnostics(settings);
    Ok(post)
}

const GLOBAL: usize = ModelParams::SHARED;
const PER_DATASET: usize = ModelParams::PER_DATASET;

/// Summed unit-pressure signal rate over all bins, s^-1 mbar^-1.
fn visible_rate(model: &JointModel, alpha: f64, ts: f64, sigma: f64) -> Option<f64> {
    let v = model
        .table()
        .total_signal_rate(alpha, ts, 1.0, sigma)
        .ok()?;
    (v > 0.0 && v.is_finite()).then_some(v)
}

/// Samples the joint posterior starting from `init` (normally the MAP point).
///
/// The walkers move in reparameterized coordinates: alpha and T_s in logit
/// coordinates of their prior boxes, and each pressure replaced by its
/// visible signal rate `P * V(alpha, T_s, sigma_q)`. Pressure trades off
/// against the visible fraction along a curved ridge; in rate coordinates
/// that ridge is nearly straight. Jacobians are folded into the target, so
/// the posterior is unchanged. Samples, log-probabilities and diagnostics
/// are reported in model coordinates. A run that fails the diagnostics is
/// repeated from the same seed at twice the length (see `extensions`).
pub fn run_mcmc(
    model: &JointModel,
    init: &ModelParams,
    settings: &McmcSettings,
) -> Result<Posterior> {
    let (lo, hi) = model.bounds();
    let x0 = init.to_vec();
    let mut scale = default_scales(model, init);
    let nd = model.n_datasets();
    let mut u0 = x0.clone();
    for i in 0..GLOBAL {
        let m = (0.5 * scale[i]).min(0.25 * (hi[i] - lo[i]));
        u0[i] = box_to_logit(x0[i].clamp(lo[i] + m, hi[i] - m), lo[i], hi[i]);
        scale[i] = (scale[i] * (-logit_log_jacobian(u0[i], lo[i], hi[i])).exp()).min(2.0);
    }
    for k in 0..nd {
        let p = GLOBAL + PER_DATASET * k;
        let v = visible_rate(model, x0[0], x0[1], x0[p + 1])
            .ok_or_else(|| Error::Domain("start point has no visible signal rate".into()))?;
        u0[p] = x0[p] * v;
        scale[p] *= v;
    }
    let to_model = |u: &[f64]| -> Option<(Vec<f64>, f64)> {
        let mut x = u.to_vec();
        let mut jac = 0.0;
        for i in 0..GLOBAL {
            x[i] = logit_to_box(u[i], lo[i], hi[i]);
            jac += logit_log_jacobian(u[i], lo[i], hi[i]);
        }
        for k in 0..nd {
            let p = GLOBAL + PER_DATASET * k;
            if !(x[p + 1] >= lo[p + 1] && x[p + 1] <= hi[p + 1]) {
                return None;
            }
            let v = visible_rate(model, x[0], x[1], x[p + 1])?;
            x[p] = u[p] / v;
            jac -= v.ln();
        }
        jac.is_finite().then_some((x, jac))
    };
    let mut s = *settings;
    let mut attempt = 0;
    loop {
        let post = run_mapped(
            |x: &[f64]| model.log_posterior(x),
            &to_model,
            ModelParams::names(nd),
            &u0,
            &scale,
            &s,
        )?;
        if post.converged || attempt == settings.extensions {
            return Ok(post);
        }
        attempt += 1;
        log::info!(
            "R-hat {:.3} / ESS {:.0} after {} steps, extending",
            post.rhat.iter().cloned().fold(0.0, f64::max),
            post.ess.iter().cloned().fold(f64::INFINITY, f64::min),
            s.n_steps
        );
        s.n_steps *= 2;
        s.burn_in *= 2;
    }
}
