//! Diffuse channel: Monte Carlo kernel with a process-wide cache, plus a
//! semi-analytic quadrature of the same sampling model.

use super::{
    sample_diffuse_collision, thermal_speed, total_collision_rate, validate_grid, Environment,
    GasSpecies, RateDensity, SphereSurface,
};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, normal_cdf};
use crate::units::KEV_C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

/// Kernel grid spacing, keV/c.
pub const KERNEL_GRID_STEP: f64 = 1.0;
/// Kernel grid covers `0 ..= 1500` keV/c.
pub const KERNEL_GRID_POINTS: usize = 1501;
pub const MIN_KERNEL_SAMPLES: usize = 100_000;

const FINE_BIN: f64 = 0.25;
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffuseSettings {
    pub samples: usize,
    pub seed: u64,
    /// Gaussian KDE bandwidth, keV/c.
    pub bandwidth: f64,
}

impl Default for DiffuseSettings {
    fn default() -> Self {
        DiffuseSettings {
            samples: 1_000_000,
            seed: 0x6a5_d1ff,
            bandwidth: 3.0,
        }
    }
}

/// Cache key. Floats are keyed by bit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KernelKey {
    pub gas: String,
    mass_bits: u64,
    tg_bits: u64,
    ts_bits: u64,
    pub samples: usize,
    pub seed: u64,
    bandwidth_bits: u64,
}

impl KernelKey {
    pub fn new(
        gas: &GasSpecies,
        gas_temperature: f64,
        surface_temperature: f64,
        s: &DiffuseSettings,
    ) -> Self {
        KernelKey {
            gas: gas.name.clone(),
            mass_bits: gas.mass_u.to_bits(),
            tg_bits: gas_temperature.to_bits(),
            ts_bits: surface_temperature.to_bits(),
            samples: s.samples,
            seed: s.seed,
            bandwidth_bits: s.bandwidth.to_bits(),
        }
    }

    pub fn mass_u(&self) -> f64 {
        f64::from_bits(self.mass_bits)
    }
    pub fn gas_temperature(&self) -> f64 {
        f64::from_bits(self.tg_bits)
    }
    pub fn surface_temperature(&self) -> f64 {
        f64::from_bits(self.ts_bits)
    }
    pub fn bandwidth(&self) -> f64 {
        f64::from_bits(self.bandwidth_bits)
    }
}

/// Per-collision probability density of |q_z| on the kernel grid, (keV/c)^-1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffuseKernel {
    pub key: KernelKey,
    pub density: Vec<f64>,
}

impl DiffuseKernel {
    pub fn grid() -> Vec<f64> {
        (0..KERNEL_GRID_POINTS)
            .map(|i| i as f64 * KERNEL_GRID_STEP)
            .collect()
    }

    /// Runs the Monte Carlo and smooths the |q_z| histogram.
    pub fn compute(
        gas: &GasSpecies,
        env: &Environment,
        surface_temperature: f64,
        settings: &DiffuseSettings,
    ) -> Result<Self> {
        if settings.samples < MIN_KERNEL_SAMPLES {
            return Err(Error::InsufficientStatistics(format!(
                "diffuse kernel needs at least {MIN_KERNEL_SAMPLES} samples, got {}",
                settings.samples
            )));
        }
        if !(settings.bandwidth > 0.0) {
            return Err(Error::Domain("kernel bandwidth must be positive".into()));
        }
        let sphere = SphereSurface::nominal(surface_temperature, 1.0);
        let span = (KERNEL_GRID_POINTS - 1) as f64 * KERNEL_GRID_STEP;
        let n_fine = ((span + 10.0 * settings.bandwidth) / FINE_BIN).ceil() as usize;
        let n_chunks = settings.samples.div_ceil(CHUNK);
        let hist = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                rng.set_stream(c as u64);
                let count = CHUNK.min(settings.samples - c * CHUNK);
                let mut h = vec![0u32; n_fine];
                for _ in 0..count {
                    let q = sample_diffuse_collision(gas, env, &sphere, &mut rng);
                    let bin = (q[2].abs() / FINE_BIN) as usize;
                    if bin < n_fine {
                        h[bin] += 1;
                    }
                }
                h
            })
            .reduce(
                || vec![0u32; n_fine],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );

        // Gaussian KDE with reflection at zero.
        let h = settings.bandwidth;
        let reach = (6.0 * h / FINE_BIN).ceil() as isize;
        let norm = 1.0 / (settings.samples as f64 * h * (2.0 * PI).sqrt());
        let mut density = vec![0.0; KERNEL_GRID_POINTS];
        for (i, d) in density.iter_mut().enumerate() {
            let x = i as f64 * KERNEL_GRID_STEP;
            let centre = (x / FINE_BIN) as isize;
            let mut acc = 0.0;
            for b in (centre - reach).max(0)..=(centre + reach).min(n_fine as isize - 1) {
                let c = hist[b as usize];
                if c == 0 {
                    continue;
                }
                let q = (b as f64 + 0.5) * FINE_BIN;
                let u = (x - q) / h;
                let v = (x + q) / h;
                acc += c as f64 * ((-0.5 * u * u).exp() + (-0.5 * v * v).exp());
            }
            *d = acc * norm;
        }
        Ok(DiffuseKernel {
            key: KernelKey::new(gas, env.gas_temperature, surface_temperature, settings),
            density,
        })
    }

    /// Writes the kernel as commented header lines followed by `q density` rows.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let k = &self.key;
        writeln!(w, "# schema_version = {}", crate::schema::VERSION)?;
        writeln!(w, "# gas = {}", k.gas)?;
        writeln!(w, "# mass_u = {:e}", k.mass_u())?;
        writeln!(w, "# gas_temperature = {:e}", k.gas_temperature())?;
        writeln!(w, "# surface_temperature = {:e}", k.surface_temperature())?;
        writeln!(
            w,
            "# grid = 0:{KERNEL_GRID_STEP}:{}",
            (KERNEL_GRID_POINTS - 1) as f64 * KERNEL_GRID_STEP
        )?;
        writeln!(w, "# samples = {}", k.samples)?;
        writeln!(w, "# seed = {}", k.seed)?;
        writeln!(w, "# bandwidth = {:e}", k.bandwidth())?;
        writeln!(w, "q_kevc density_per_kevc")?;
        for (i, d) in self.density.iter().enumerate() {
            writeln!(w, "{} {:e}", i as f64 * KERNEL_GRID_STEP, d)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut meta: HashMap<String, String> = HashMap::new();
        let mut density = Vec::with_capacity(KERNEL_GRID_POINTS);
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(_), Some(d)) = (cols.next(), cols.next()) else {
                continue;
            };
            if let Ok(v) = d.parse::<f64>() {
                density.push(v);
            }
        }
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Format(format!("kernel file lacks `{k}`")))
        };
        crate::schema::check(get("schema_version")?)?;
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{k}: {e}")))
        };
        if density.len() != KERNEL_GRID_POINTS {
            return Err(Error::Format(format!(
                "kernel has {} rows, expected {KERNEL_GRID_POINTS}",
                density.len()
            )));
        }
        let gas = GasSpecies::new(get("gas")?.clone(), num("mass_u")?)?;
        let settings = DiffuseSettings {
            samples: num("samples")? as usize,
            seed: get("seed")?
                .parse()
                .map_err(|e| Error::Format(format!("seed: {e}")))?,
            bandwidth: num("bandwidth")?,
        };
        Ok(DiffuseKernel {
            key: KernelKey::new(
                &gas,
                num("gas_temperature")?,
                num("surface_temperature")?,
                &settings,
            ),
            density,
        })
    }

    pub fn value_at(&self, q: f64) -> f64 {
        let i = q / KERNEL_GRID_STEP;
        if !(i >= 0.0) || i >= (KERNEL_GRID_POINTS - 1) as f64 {
            return 0.0;
        }
        let lo = i as usize;
        let t = i - lo as f64;
        self.density[lo] * (1.0 - t) + self.density[lo + 1] * t
    }
}

/// Thread-safe kernel cache; each key is computed at most once.
#[derive(Default)]
pub struct KernelCache {
    slots: Mutex<HashMap<KernelKey, Arc<OnceLock<Arc<DiffuseKernel>>>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static KernelCache {
        static GLOBAL: OnceLock<KernelCache> = OnceLock::new();
        GLOBAL.get_or_init(KernelCache::new)
    }

    pub fn get_or_compute(
        &self,
        gas: &GasSpecies,
        env: &Environment,
        surface_temperature: f64,
        settings: &DiffuseSettings,
    ) -> Result<Arc<DiffuseKernel>> {
        if settings.samples < MIN_KERNEL_SAMPLES {
            return Err(Error::InsufficientStatistics(format!(
                "diffuse kernel needs at least {MIN_KERNEL_SAMPLES} samples, got {}",
                settings.samples
            )));
        }
        let key = KernelKey::new(gas, env.gas_temperature, surface_temperature, settings);
        let slot = {
            let mut map = self.slots.lock().expect("kernel cache poisoned");
            map.entry(key).or_default().clone()
        };
        if let Some(k) = slot.get() {
            return Ok(k.clone());
        }
        let computed = Arc::new(DiffuseKernel::compute(
            gas,
            env,
            surface_temperature,
            settings,
        )?);
        Ok(slot.get_or_init(|| computed).clone())
    }

    /// Inserts a kernel loaded from disk.
    pub fn insert(&self, kernel: DiffuseKernel) {
        let slot = Arc::new(OnceLock::new());
        let key = kernel.key.clone();
        let _ = slot.set(Arc::new(kernel));
        self.slots
            .lock()
            .expect("kernel cache poisoned")
            .insert(key, slot);
    }

    pub fn len(&self) -> usize {
        self.slots
            .lock()
            .map(|m| m.values().filter(|s| s.get().is_some()).count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_resolution(
    grid: &[f64],
    gas: &GasSpecies,
    env: &Environment,
    samples: usize,
) -> Result<()> {
    let min_step = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .max(KERNEL_GRID_STEP);
    let per_step = samples as f64 * min_step / (2.0 * super::momentum_scale(gas, env));
    if per_step < 100.0 {
        return Err(Error::InsufficientStatistics(format!(
            "{samples} samples give about {per_step:.0} per {min_step} keV/c grid step near the peak; need 100"
        )));
    }
    Ok(())
}

/// Diffuse channel of the |q_z| rate density, s^-1 (keV/c)^-1. Uses the
/// global kernel cache; scales linearly with pressure and accommodation.
pub fn diffuse_density(
    grid: &[f64],
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
    settings: &DiffuseSettings,
) -> Result<RateDensity> {
    validate_grid(grid)?;
    env.validate()?;
    sphere.validate()?;
    if settings.samples < MIN_KERNEL_SAMPLES {
        return Err(Error::InsufficientStatistics(format!(
            "diffuse kernel needs at least {MIN_KERNEL_SAMPLES} samples, got {}",
            settings.samples
        )));
    }
    check_resolution(grid, gas, env, settings.samples)?;
    if sphere.accommodation == 0.0 || env.pressure == 0.0 {
        return Ok(RateDensity::zeros(grid));
    }
    let kernel =
        KernelCache::global().get_or_compute(gas, env, sphere.surface_temperature, settings)?;
    let scale = sphere.accommodation * total_collision_rate(gas, env, sphere);
    let density = grid.iter().map(|&q| scale * kernel.value_at(q)).collect();
    Ok(RateDensity {
        grid: grid.to_vec(),
        density,
    })
}

/// Diffuse channel by deterministic quadrature of the same sampling model.
///
/// With `c` the cosine of the polar angle of the hit point, the z-transfer per
/// unit mass is `s X - c (R_a + R_b)` where `X ~ N(0, a^2 + b^2)` and `R_a`,
/// `R_b` are Rayleigh with the incoming and outgoing thermal speeds. The
/// Gaussian-plus-Rayleigh part has a closed form; the outgoing Rayleigh and the
/// angle are integrated by Gauss-Legendre.
pub fn diffuse_density_quadrature(
    grid: &[f64],
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
) -> Result<RateDensity> {
    validate_grid(grid)?;
    env.validate()?;
    sphere.validate()?;
    let m = gas.mass_kg();
    let a = thermal_speed(m, env.gas_temperature);
    let b = thermal_speed(m, sphere.surface_temperature);
    let sigma = (a * a + b * b).sqrt();
    let (cs, cw) = gauss_legendre(64, 0.0, 1.0);
    let (rs, rw) = if b > 0.0 {
        let (x, w) = gauss_legendre(64, 0.0, 9.0 * b);
        let p: Vec<f64> = x
            .iter()
            .zip(&w)
            .map(|(r, w)| w * r / (b * b) * (-0.5 * r * r / (b * b)).exp())
            .collect();
        (x, p)
    } else {
        (vec![0.0], vec![1.0])
    };
    let f_w = |w: f64, c: f64| -> f64 {
        let s = (1.0 - c * c).max(0.0).sqrt();
        let tau = s * sigma;
        let s2 = tau * tau + c * c * a * a;
        let big_s = s2.sqrt();
        let kappa = a * tau / big_s;
        let u0 = -c * w * a * a / s2;
        let t1 = tau / s2 * (-0.5 * w * w / (tau * tau)).exp() / (2.0 * PI).sqrt();
        let t2 = u0 / (a * big_s) * normal_cdf(u0 / kappa) * (-0.5 * w * w / s2).exp();
        t1 + t2
    };
    let scale = sphere.accommodation * total_collision_rate(gas, env, sphere) * KEV_C / m;
    let density = grid
        .par_iter()
        .map(|&q| {
            let y = q * KEV_C / m;
            let mut acc = 0.0;
            for (&c, &wc) in cs.iter().zip(&cw) {
                let mut g = 0.0;
                for (&r, &pr) in rs.iter().zip(&rw) {
                    g += pr * (f_w(y + c * r, c) + f_w(-y + c * r, c));
                }
                acc += wc * g;
            }
            (scale * acc).max(0.0)
        })
        .collect();
    Ok(RateDensity {
        grid: grid.to_vec(),
        density,
    })
}
