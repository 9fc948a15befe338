//! Bounded Nelder-Mead minimization and the MAP fit built on it.

use super::model::{JointModel, ModelParams};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadSettings {
    pub max_evaluations: usize,
    /// Absolute spread of function values across the simplex.
    pub f_tol: f64,
    /// Simplex diameter in units of the per-parameter steps.
    pub x_tol: f64,
    /// Fresh simplices started from the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadSettings {
    fn default() -> Self {
        NelderMeadSettings {
            max_evaluations: 200_000,
            f_tol: 1e-7,
            x_tol: 1e-5,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Minimizes `f` inside the box `[lo, hi]`. Trial points are projected onto
/// the box; `steps` sets the initial simplex size per coordinate.
pub fn minimize_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    steps: &[f64],
    settings: &NelderMeadSettings,
) -> Result<Minimum> {
    let n = x0.len();
    if n == 0 || lo.len() != n || hi.len() != n || steps.len() != n {
        return Err(Error::Domain(
            "dimension mismatch in bounded minimization".into(),
        ));
    }
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let nf = n as f64;
    // Dimension-adapted coefficients.
    let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut best = x0.to_vec();
    project(&mut best, lo, hi);
    let mut best_f = eval(&best, &mut evals);
    let mut converged = false;
    for _round in 0..=settings.restarts {
        let mut simplex = vec![best.clone()];
        for i in 0..n {
            let mut v = best.clone();
            v[i] += steps[i];
            if v[i] > hi[i] {
                v[i] = best[i] - steps[i];
            }
            project(&mut v, lo, hi);
            simplex.push(v);
        }
        let mut fv: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
        converged = false;
        while evals < settings.max_evaluations {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fv = order.iter().map(|&i| fv[i]).collect();

            let spread = fv[n] - fv[0];
            let diameter = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .zip(steps)
                        .map(|((a, b), s)| ((a - b) / s).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread.is_finite() && spread <= settings.f_tol && diameter <= settings.x_tol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                project(&mut p, lo, hi);
                p
            };
            let xr = along(rho);
            let fr = eval(&xr, &mut evals);
            if fr < fv[0] {
                let xe = along(rho * chi);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    fv[n] = fe;
                } else {
                    simplex[n] = xr;
                    fv[n] = fr;
                }
                continue;
            }
            if fr < fv[n - 1] {
                simplex[n] = xr;
                fv[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < fv[n] {
                let xc = along(rho * gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
                continue;
            }
            for i in 1..=n {
                let v: Vec<f64> = simplex[0]
                    .iter()
                    .zip(&simplex[i])
                    .map(|(b, x)| b + sigma * (x - b))
                    .collect();
                fv[i] = eval(&v, &mut evals);
                simplex[i] = v;
            }
        }
        let i0 = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
        let improvement = best_f - fv[i0];
        if fv[i0] <= best_f {
            best = simplex[i0].clone();
            best_f = fv[i0];
        }
        if !converged || improvement.abs() <= settings.f_tol {
            break;
        }
    }
    if !converged {
        let grad = gradient_norm(&mut |x: &[f64]| eval(x, &mut evals), &best, lo, hi, steps);
        return Err(Error::NonConvergence {
            message: format!("Nelder-Mead stopped after {evals} evaluations at f = {best_f:.6e}"),
            state: best,
            gradient_norm: grad,
        });
    }
    Ok(Minimum {
        x: best,
        f: best_f,
        evaluations: evals,
    })
}

/// Central-difference gradient norm in step-scaled coordinates.
pub fn gradient_norm<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    steps: &[f64],
) -> f64 {
    let mut sum = 0.0;
    for i in 0..x.len() {
        let h = 1e-4 * steps[i];
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] = (x[i] + h).min(hi[i]);
        b[i] = (x[i] - h).max(lo[i]);
        let d = (a[i] - b[i]) / steps[i];
        if d > 0.0 {
            let g = (f(&a) - f(&b)) / d;
            sum += g * g;
        }
    }
    sum.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    pub params: ModelParams,
    pub log_posterior: f64,
    pub evaluations: usize,
}

/// Internal coordinates: pressures on a log scale, everything else linear.
struct Coordinates {
    log: Vec<bool>,
    steps: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Coordinates {
    fn new(model: &JointModel, init: &ModelParams) -> Self {
        let (lo, hi) = model.bounds();
        let mut log = vec![false, false];
        let mut steps = vec![0.1, 30.0];
        for d in &init.datasets {
            log.extend([true, false, false, false]);
            steps.extend([0.2, 3.0, 0.1 * d.bg_amplitude.max(1.0), 10.0]);
        }
        let map = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(&log)
                .map(|(x, l)| if *l { x.ln() } else { *x })
                .collect()
        };
        let (lo, hi) = (map(&lo), map(&hi));
        Coordinates { log, steps, lo, hi }
    }

    fn to_internal(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.log)
            .map(|(x, l)| if *l { x.ln() } else { *x })
            .collect()
    }

    fn to_external(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.log)
            .map(|(x, l)| if *l { x.exp() } else { *x })
            .collect()
    }
}

/// Maximizes the joint log-posterior. Each dataset's own parameters are fitted
/// first with the shared ones held at `init`, then everything jointly.
pub fn fit_map(
    model: &JointModel,
    init: &ModelParams,
    settings: &NelderMeadSettings,
) -> Result<MapFit> {
    if init.datasets.len() != model.n_datasets() {
        return Err(Error::Config(
            "initial parameters do not match the number of datasets".into(),
        ));
    }
    if !model.joint_log_posterior(init).is_finite() {
        return Err(Error::Domain(
            "initial parameters lie outside the model support".into(),
        ));
    }
    let coords = Coordinates::new(model, init);
    let mut z = coords.to_internal(&init.to_vec());
    let mut evaluations = 0;

    let s = ModelParams::SHARED;
    let w = ModelParams::PER_DATASET;
    for i in 0..model.n_datasets() {
        let r = s + w * i..s + w * (i + 1);
        let base = z.clone();
        let m = minimize_bounded(
            |sub: &[f64]| {
                let mut full = base.clone();
                full[r.clone()].copy_from_slice(sub);
                -model.log_posterior(&coords.to_external(&full))
            },
            &z[r.clone()],
            &coords.lo[r.clone()],
            &coords.hi[r.clone()],
            &coords.steps[r.clone()],
            settings,
        )?;
        evaluations += m.evaluations;
        z[r].copy_from_slice(&m.x);
    }
    let m = minimize_bounded(
        |v: &[f64]| -model.log_posterior(&coords.to_external(v)),
        &z,
        &coords.lo,
        &coords.hi,
        &coords.steps,
        settings,
    )
    .map_err(|e| match e {
        Error::NonConvergence {
            message,
            state,
            gradient_norm,
        } => Error::NonConvergence {
            message,
            state: coords.to_external(&state),
            gradient_norm,
        },
        other => other,
    })?;
    evaluations += m.evaluations;
    Ok(MapFit {
        params: ModelParams::from_slice(&coords.to_external(&m.x))?,
        log_posterior: -m.f,
        evaluations,
    })
}
