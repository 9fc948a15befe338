//! Gaussian resolution smearing of the |q_z| spectrum and binned expectations.
//!
//! The unsmeared density is piecewise linear on a 1 keV/c grid. Smearing is a
//! signed-domain convolution folded back onto |q_z|, so every linear
//! functional of the smeared spectrum reduces to closed-form segment
//! integrals of the normal density and CDF.

use super::diffuse::{diffuse_density, DiffuseSettings};
use super::{specular_density, validate_grid, RateDensity, SpectrumParams};
use crate::error::{Error, Result};
use crate::numeric::{ln_normal_sf, normal_cdf, normal_pdf};
use serde::{Deserialize, Serialize};

/// Spacing of the internal true-|q_z| grid, keV/c.
pub const INTERNAL_GRID_STEP: f64 = 1.0;
/// Upper end of the internal grid, keV/c.
pub const SPECTRUM_CUTOFF: f64 = 1500.0;
/// Coarsest requested grid accepted by [`smeared_spectrum`], keV/c.
pub const MAX_GRID_STEP: f64 = 5.0;

const TAIL: f64 = 8.5;

pub(crate) fn internal_grid() -> Vec<f64> {
    let n = (SPECTRUM_CUTOFF / INTERNAL_GRID_STEP).round() as usize + 1;
    (0..n).map(|i| i as f64 * INTERNAL_GRID_STEP).collect()
}

/// Unsmeared |q_z| rate density (specular plus diffuse) on `grid`.
pub fn unsmeared_density(
    params: &SpectrumParams,
    grid: &[f64],
    settings: &DiffuseSettings,
) -> Result<RateDensity> {
    params.validate()?;
    validate_grid(grid)?;
    let diffuse = diffuse_density(grid, &params.gas, &params.env, &params.sphere, settings)?;
    let mut density = diffuse.density;
    for (d, &q) in density.iter_mut().zip(grid) {
        *d += specular_density(q, &params.gas, &params.env, &params.sphere)?;
    }
    Ok(RateDensity {
        grid: grid.to_vec(),
        density,
    })
}

// I0' = Phi, I1' = u Phi.
#[inline]
fn i0(u: f64) -> f64 {
    u * normal_cdf(u) + normal_pdf(u)
}
#[inline]
fn i1(u: f64) -> f64 {
    0.5 * ((u * u - 1.0) * normal_cdf(u) + u * normal_pdf(u))
}

/// Adds `A - B` to node j and `B` to node j+1 for every segment, where `A` and
/// `M` are the zeroth and first moments of the kernel over the segment.
fn accumulate(
    grid: &[f64],
    weights: &mut [f64],
    mut moments: impl FnMut(f64, f64) -> Option<(f64, f64)>,
) {
    for j in 0..grid.len() - 1 {
        let (q0, q1) = (grid[j], grid[j + 1]);
        if let Some((a, m)) = moments(q0, q1) {
            let b = (m - q0 * a) / (q1 - q0);
            weights[j] += a - b;
            weights[j + 1] += b;
        }
    }
}

/// Node weights `w` with `sum_j w_j g_j = int g(q) C(e, q) dq` where
/// `C(e, q) = Phi((e - q)/s) + Phi((e + q)/s)` is, up to a constant, the
/// probability that true |q| reconstructs below `e`.
fn cdf_weights(grid: &[f64], edge: f64, sigma: f64) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    accumulate(grid, &mut w, |q0, q1| {
        let d = q1 - q0;
        let full = (d, 0.5 * (q1 * q1 - q0 * q0));
        let mut a = 0.0;
        let mut m = 0.0;
        // Phi((e - q)/s)
        let (u0, u1) = ((edge - q0) / sigma, (edge - q1) / sigma);
        if u1 > TAIL {
            a += full.0;
            m += full.1;
        } else if u0 >= -TAIL {
            let di0 = i0(u0) - i0(u1);
            let di1 = i1(u0) - i1(u1);
            a += sigma * di0;
            m += sigma * edge * di0 - sigma * sigma * di1;
        }
        // Phi((e + q)/s)
        let (v0, v1) = ((edge + q0) / sigma, (edge + q1) / sigma);
        if v0 > TAIL {
            a += full.0;
            m += full.1;
        } else if v1 >= -TAIL {
            let di0 = i0(v1) - i0(v0);
            let di1 = i1(v1) - i1(v0);
            a += sigma * di0;
            m += sigma * sigma * di1 - sigma * edge * di0;
        }
        Some((a, m))
    });
    w
}

/// Node weights for the smeared density evaluated at `x`.
fn density_weights(grid: &[f64], x: f64, sigma: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let lo = x - TAIL * sigma;
    let hi = x + TAIL * sigma;
    accumulate(grid, out, |q0, q1| {
        let near = q1 >= lo && q0 <= hi;
        let mirror = -q0 >= lo && -q1 <= hi;
        if !near && !mirror {
            return None;
        }
        let mut a = 0.0;
        let mut m = 0.0;
        if near {
            // phi_s(x - q)
            let (u0, u1) = ((x - q0) / sigma, (x - q1) / sigma);
            let dphi = normal_cdf(u0) - normal_cdf(u1);
            a += dphi;
            m += x * dphi + sigma * (normal_pdf(u0) - normal_pdf(u1));
        }
        if mirror {
            // phi_s(x + q)
            let (v0, v1) = ((x + q0) / sigma, (x + q1) / sigma);
            let dphi = normal_cdf(v1) - normal_cdf(v0);
            a += dphi;
            m += sigma * (normal_pdf(v0) - normal_pdf(v1)) - x * dphi;
        }
        Some((a, m))
    });
}

fn check_requested_grid(grid: &[f64]) -> Result<()> {
    validate_grid(grid)?;
    if let Some(step) = grid.windows(2).map(|w| w[1] - w[0]).reduce(f64::max) {
        if step > MAX_GRID_STEP {
            return Err(Error::ResolutionAliasing(format!(
                "grid step {step} keV/c is coarser than {MAX_GRID_STEP} keV/c"
            )));
        }
    }
    Ok(())
}

/// Smears an unsmeared density given on the internal grid.
pub(crate) fn smear_internal(true_density: &[f64], sigma: f64, grid: &[f64]) -> Vec<f64> {
    let qgrid = internal_grid();
    let mut w = vec![0.0; qgrid.len()];
    grid.iter()
        .map(|&x| {
            density_weights(&qgrid, x, sigma, &mut w);
            w.iter()
                .zip(true_density)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}

/// Resolution-smeared |q_z| rate density evaluated on `grid`.
pub fn smeared_spectrum(params: &SpectrumParams, grid: &[f64]) -> Result<RateDensity> {
    smeared_spectrum_with(params, grid, &DiffuseSettings::default())
}

pub fn smeared_spectrum_with(
    params: &SpectrumParams,
    grid: &[f64],
    settings: &DiffuseSettings,
) -> Result<RateDensity> {
    params.validate()?;
    check_requested_grid(grid)?;
    let truth = unsmeared_density(params, &internal_grid(), settings)?;
    Ok(RateDensity {
        grid: grid.to_vec(),
        density: smear_internal(&truth.density, params.sigma_q, grid),
    })
}

/// Per-bin node weights: `counts_b / live = sum_j weights[b][j] g_j` for an
/// unsmeared density `g` on `qgrid`.
pub fn bin_integral_weights(edges: &[f64], sigma: f64, qgrid: &[f64]) -> Result<Vec<Vec<f64>>> {
    validate_grid(edges)?;
    validate_grid(qgrid)?;
    if edges.len() < 2 {
        return Err(Error::Domain("need at least two bin edges".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let per_edge: Vec<Vec<f64>> = edges
        .iter()
        .map(|&e| cdf_weights(qgrid, e, sigma))
        .collect();
    Ok(per_edge
        .windows(2)
        .map(|p| p[1].iter().zip(&p[0]).map(|(h, l)| h - l).collect())
        .collect())
}

/// Gaussian background of reconstructed amplitudes, parametrized by its rate
/// above the analysis threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBackground {
    /// Events per second above `threshold`.
    pub rate: f64,
    /// keV/c.
    pub mean: f64,
    /// keV/c.
    pub sigma: f64,
    /// keV/c.
    pub threshold: f64,
}

impl GaussianBackground {
    /// Fraction of above-threshold background falling in each bin.
    pub fn bin_fractions(&self, edges: &[f64]) -> Vec<f64> {
        let z = |e: f64| (e - self.mean) / self.sigma;
        let ln_norm = ln_normal_sf(z(self.threshold));
        let tail = |e: f64| (ln_normal_sf(z(e.max(self.threshold))) - ln_norm).exp();
        edges
            .windows(2)
            .map(|w| (tail(w[0]) - tail(w[1])).max(0.0))
            .collect()
    }

    pub fn counts(&self, edges: &[f64], live_time: f64) -> Vec<f64> {
        self.bin_fractions(edges)
            .into_iter()
            .map(|f| f * self.rate * live_time)
            .collect()
    }
}

/// Expected counts per bin over `live_time` seconds, optionally including the
/// Gaussian background.
pub fn expected_counts(
    params: &SpectrumParams,
    edges: &[f64],
    live_time: f64,
    background: Option<&GaussianBackground>,
) -> Result<Vec<f64>> {
    expected_counts_with(
        params,
        edges,
        live_time,
        background,
        &DiffuseSettings::default(),
    )
}

pub fn expected_counts_with(
    params: &SpectrumParams,
    edges: &[f64],
    live_time: f64,
    background: Option<&GaussianBackground>,
    settings: &DiffuseSettings,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(live_time >= 0.0) {
        return Err(Error::Domain(format!(
            "live time must be non-negative, got {live_time}"
        )));
    }
    let qgrid = internal_grid();
    let weights = bin_integral_weights(edges, params.sigma_q, &qgrid)?;
    let truth = unsmeared_density(params, &qgrid, settings)?;
    let mut counts: Vec<f64> = weights
        .iter()
        .map(|w| {
            live_time
                * w.iter()
                    .zip(&truth.density)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .max(0.0)
        })
        .collect();
    if let Some(bg) = background {
        for (c, b) in counts.iter_mut().zip(bg.counts(edges, live_time)) {
            *c += b;
        }
    }
    Ok(counts)
}
