//! Precomputed binned response for fast likelihood evaluation.
//!
//! For fixed bin edges the expected signal rate is bilinear in (pressure,
//! accommodation) and smooth in (sigma_q, T_s). The table stores per-bin rates
//! at unit pressure on a sigma_q grid for the specular channel and, built on
//! demand, for the diffuse channel at each T_s node. Evaluation interpolates
//! bilinearly in (sigma_q, T_s).

use super::diffuse::{DiffuseSettings, KernelCache, KERNEL_GRID_POINTS};
use super::smear::{bin_integral_weights, internal_grid};
use super::{specular_density, total_collision_rate, Environment, GasSpecies, SphereSurface};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTableSpec {
    pub gas: GasSpecies,
    pub gas_temperature: f64,
    /// Sphere radius, m.
    pub radius: f64,
    pub edges: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_step: f64,
    pub ts_min: f64,
    pub ts_max: f64,
    pub ts_step: f64,
    pub diffuse: DiffuseSettings,
}

impl ResponseTableSpec {
    /// Table covering `[0.5 lo, 1.6 hi]` in sigma_q and `293 ..= 1000` K in T_s.
    pub fn new(gas: GasSpecies, edges: Vec<f64>, sigma_lo: f64, sigma_hi: f64) -> Self {
        ResponseTableSpec {
            gas,
            gas_temperature: Environment::ROOM_TEMPERATURE,
            radius: SphereSurface::NOMINAL_RADIUS,
            edges,
            sigma_min: (0.5 * sigma_lo).floor().max(1.0),
            sigma_max: (1.6 * sigma_hi).ceil(),
            sigma_step: 1.0,
            ts_min: Environment::ROOM_TEMPERATURE,
            ts_max: 1000.0,
            ts_step: 5.0,
            diffuse: DiffuseSettings::default(),
        }
    }
}

pub struct ResponseTable {
    spec: ResponseTableSpec,
    sigmas: Vec<f64>,
    temps: Vec<f64>,
    /// [sigma][bin][q] node weights.
    weights: Vec<Vec<Vec<f64>>>,
    /// [sigma][bin], s^-1 mbar^-1 at alpha = 0.
    specular: Vec<Vec<f64>>,
    /// [ts][sigma][bin], s^-1 mbar^-1 at alpha = 1.
    diffuse: Vec<OnceLock<Vec<Vec<f64>>>>,
}

fn nodes(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl ResponseTable {
    pub fn build(spec: ResponseTableSpec) -> Result<Self> {
        if !(spec.sigma_min > 0.0 && spec.sigma_max > spec.sigma_min && spec.sigma_step > 0.0) {
            return Err(Error::Config(
                "invalid sigma_q range for response table".into(),
            ));
        }
        if !(spec.ts_min >= 0.0 && spec.ts_max > spec.ts_min && spec.ts_step > 0.0) {
            return Err(Error::Config("invalid T_s range for response table".into()));
        }
        let sigmas = nodes(spec.sigma_min, spec.sigma_max, spec.sigma_step);
        let temps = nodes(spec.ts_min, spec.ts_max, spec.ts_step);
        let qgrid = internal_grid();
        let weights = sigmas
            .par_iter()
            .map(|&s| bin_integral_weights(&spec.edges, s, &qgrid))
            .collect::<Result<Vec<_>>>()?;
        let env = Environment::new(spec.gas_temperature, 1.0)?;
        let sphere = SphereSurface::new(spec.radius, spec.ts_min, 0.0)?;
        let spec_density = qgrid
            .iter()
            .map(|&q| specular_density(q, &spec.gas, &env, &sphere))
            .collect::<Result<Vec<_>>>()?;
        let specular = weights.iter().map(|w| fold(w, &spec_density)).collect();
        let diffuse = temps.iter().map(|_| OnceLock::new()).collect();
        Ok(ResponseTable {
            spec,
            sigmas,
            temps,
            weights,
            specular,
            diffuse,
        })
    }

    pub fn spec(&self) -> &ResponseTableSpec {
        &self.spec
    }

    pub fn edges(&self) -> &[f64] {
        &self.spec.edges
    }

    pub fn n_bins(&self) -> usize {
        self.spec.edges.len() - 1
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        (self.sigmas[0], *self.sigmas.last().unwrap())
    }

    pub fn ts_range(&self) -> (f64, f64) {
        (self.temps[0], *self.temps.last().unwrap())
    }

    fn diffuse_node(&self, j: usize) -> Result<&Vec<Vec<f64>>> {
        if let Some(t) = self.diffuse[j].get() {
            return Ok(t);
        }
        let env = Environment::new(self.spec.gas_temperature, 1.0)?;
        let kernel = KernelCache::global().get_or_compute(
            &self.spec.gas,
            &env,
            self.temps[j],
            &self.spec.diffuse,
        )?;
        debug_assert_eq!(kernel.density.len(), KERNEL_GRID_POINTS);
        let sphere = SphereSurface::new(self.spec.radius, self.temps[j], 1.0)?;
        let rate = total_collision_rate(&self.spec.gas, &env, &sphere);
        let density: Vec<f64> = kernel.density.iter().map(|d| d * rate).collect();
        let table = self.weights.par_iter().map(|w| fold(w, &density)).collect();
        Ok(self.diffuse[j].get_or_init(|| table))
    }

    /// Builds every diffuse node up to `ts_max` ahead of time.
    pub fn prebuild(&self, ts_max: f64) -> Result<()> {
        for j in 0..self.temps.len() {
            if self.temps[j] > ts_max + self.spec.ts_step {
                break;
            }
            self.diffuse_node(j)?;
        }
        Ok(())
    }

    fn locate(grid: &[f64], x: f64, what: &str) -> Result<(usize, f64)> {
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!(
                "{what} = {x} outside table range [{lo}, {hi}]"
            )));
        }
        let step = grid[1] - grid[0];
        let i = (((x - lo) / step) as usize).min(grid.len() - 2);
        Ok((i, (x - grid[i]) / step))
    }

    /// Expected signal rate per bin, s^-1.
    pub fn signal_rates(
        &self,
        alpha: f64,
        ts: f64,
        pressure: f64,
        sigma: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1]")));
        }
        let (k, u) = Self::locate(&self.sigmas, sigma, "sigma_q")?;
        out.iter_mut().for_each(|o| *o = 0.0);
        let spec_w = pressure * (1.0 - alpha);
        for (o, (a, b)) in out
            .iter_mut()
            .zip(self.specular[k].iter().zip(&self.specular[k + 1]))
        {
            *o += spec_w * ((1.0 - u) * a + u * b);
        }
        if alpha > 0.0 {
            let (j, t) = Self::locate(&self.temps, ts, "T_s")?;
            let lo = self.diffuse_node(j)?;
            let hi = self.diffuse_node(j + 1)?;
            let w = pressure * alpha;
            let c = [(1.0 - t) * (1.0 - u), (1.0 - t) * u, t * (1.0 - u), t * u];
            for (b, o) in out.iter_mut().enumerate() {
                *o += w
                    * (c[0] * lo[k][b]
                        + c[1] * lo[k + 1][b]
                        + c[2] * hi[k][b]
                        + c[3] * hi[k + 1][b]);
            }
        }
        Ok(())
    }

    /// Sum of [`signal_rates`](Self::signal_rates) over all bins, s^-1.
    pub fn total_signal_rate(&self, alpha: f64, ts: f64, pressure: f64, sigma: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1]")));
        }
        let (k, u) = Self::locate(&self.sigmas, sigma, "sigma_q")?;
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let mut total =
            (1.0 - alpha) * ((1.0 - u) * sum(&self.specular[k]) + u * sum(&self.specular[k + 1]));
        if alpha > 0.0 {
            let (j, t) = Self::locate(&self.temps, ts, "T_s")?;
            let lo = self.diffuse_node(j)?;
            let hi = self.diffuse_node(j + 1)?;
            total += alpha
                * ((1.0 - t) * ((1.0 - u) * sum(&lo[k]) + u * sum(&lo[k + 1]))
                    + t * ((1.0 - u) * sum(&hi[k]) + u * sum(&hi[k + 1])));
        }
        Ok(pressure * total)
    }
}

fn fold(weights: &[Vec<f64>], density: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| {
            w.iter()
                .zip(density)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}
