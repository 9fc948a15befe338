//! Momentum-transfer spectrum of gas molecules scattering from a sphere.
//!
//! A collision is either specular (mirror reflection) or diffuse (the molecule
//! thermalizes with the surface and is re-emitted with a cosine law). The
//! accommodation coefficient `alpha` is the diffuse fraction. Both channels
//! share the same arrival statistics, so each integrates to its fraction of
//! [`total_collision_rate`].
//!
//! Units: grids and momenta are keV/c, densities are s^-1 (keV/c)^-1,
//! pressures are mbar. Computation is SI internally.

mod diffuse;
mod smear;
mod table;

pub use diffuse::{
    diffuse_density, diffuse_density_quadrature, DiffuseKernel, DiffuseSettings, KernelCache,
    KernelKey, KERNEL_GRID_POINTS, KERNEL_GRID_STEP, MIN_KERNEL_SAMPLES,
};
pub use smear::{
    bin_integral_weights, expected_counts, smeared_spectrum, unsmeared_density, GaussianBackground,
    INTERNAL_GRID_STEP, SPECTRUM_CUTOFF,
};
pub use table::{ResponseTable, ResponseTableSpec};

use crate::error::{Error, Result};
use crate::units::{ATOMIC_MASS_UNIT, BOLTZMANN, KEV_C, PA_PER_MBAR};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

/// Gas species; owns the particle mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasSpecies {
    pub name: String,
    /// Particle mass in unified atomic mass units.
    pub mass_u: f64,
}

impl GasSpecies {
    pub fn new(name: impl Into<String>, mass_u: f64) -> Result<Self> {
        if !(mass_u > 0.0 && mass_u.is_finite()) {
            return Err(Error::Domain(format!(
                "gas mass must be positive, got {mass_u} u"
            )));
        }
        Ok(GasSpecies {
            name: name.into(),
            mass_u,
        })
    }

    pub fn krypton() -> Self {
        GasSpecies {
            name: "Kr".into(),
            mass_u: 83.798,
        }
    }

    pub fn xenon() -> Self {
        GasSpecies {
            name: "Xe".into(),
            mass_u: 131.293,
        }
    }

    pub fn sf6() -> Self {
        GasSpecies {
            name: "SF6".into(),
            mass_u: 146.055,
        }
    }

    /// Looks up a built-in species by name (case-insensitive).
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kr" | "krypton" => Ok(Self::krypton()),
            "xe" | "xenon" => Ok(Self::xenon()),
            "sf6" => Ok(Self::sf6()),
            other => Err(Error::Config(format!("unknown gas species `{other}`"))),
        }
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_u * ATOMIC_MASS_UNIT
    }
}

/// Gas temperature and partial pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Kelvin.
    pub gas_temperature: f64,
    /// mbar.
    pub pressure: f64,
}

impl Environment {
    pub const ROOM_TEMPERATURE: f64 = 293.0;

    pub fn new(gas_temperature: f64, pressure: f64) -> Result<Self> {
        let env = Environment {
            gas_temperature,
            pressure,
        };
        env.validate()?;
        Ok(env)
    }

    /// Room-temperature gas at the given pressure in mbar.
    pub fn at_pressure(pressure: f64) -> Self {
        Environment {
            gas_temperature: Self::ROOM_TEMPERATURE,
            pressure,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gas_temperature > 0.0 && self.gas_temperature.is_finite()) {
            return Err(Error::Domain(format!(
                "gas temperature must be positive, got {}",
                self.gas_temperature
            )));
        }
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::Domain(format!(
                "pressure must be non-negative, got {}",
                self.pressure
            )));
        }
        Ok(())
    }

    pub fn pressure_pa(&self) -> f64 {
        self.pressure * PA_PER_MBAR
    }
}

impl Default for Environment {
    fn default() -> Self {
        Self::at_pressure(0.0)
    }
}

/// Sphere geometry and gas-surface interaction properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSurface {
    /// Meters.
    pub radius: f64,
    /// Kelvin.
    pub surface_temperature: f64,
    /// Diffuse fraction in [0, 1].
    pub accommodation: f64,
}

impl SphereSurface {
    pub const NOMINAL_RADIUS: f64 = 50.0e-9;

    pub fn new(radius: f64, surface_temperature: f64, accommodation: f64) -> Result<Self> {
        let s = SphereSurface {
            radius,
            surface_temperature,
            accommodation,
        };
        s.validate()?;
        Ok(s)
    }

    /// Nominal 50 nm sphere.
    pub fn nominal(surface_temperature: f64, accommodation: f64) -> Self {
        SphereSurface {
            radius: Self::NOMINAL_RADIUS,
            surface_temperature,
            accommodation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Domain(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.surface_temperature >= 0.0 && self.surface_temperature.is_finite()) {
            return Err(Error::Domain(format!(
                "surface temperature must be non-negative, got {}",
                self.surface_temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.accommodation) {
            return Err(Error::Domain(format!(
                "accommodation must lie in [0, 1], got {}",
                self.accommodation
            )));
        }
        Ok(())
    }

    pub fn cross_section(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

/// Rate density on an ascending |q_z| grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDensity {
    /// keV/c, strictly increasing.
    pub grid: Vec<f64>,
    /// s^-1 (keV/c)^-1, non-negative.
    pub density: Vec<f64>,
}

impl RateDensity {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() {
            return Err(Error::Domain("grid and density lengths differ".into()));
        }
        validate_grid(&grid)?;
        if density.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Domain("rate density must be non-negative".into()));
        }
        Ok(RateDensity { grid, density })
    }

    pub fn zeros(grid: &[f64]) -> Self {
        RateDensity {
            grid: grid.to_vec(),
            density: vec![0.0; grid.len()],
        }
    }

    /// Trapezoid integral over the grid, s^-1.
    pub fn integral(&self) -> f64 {
        crate::numeric::trapezoid(&self.grid, &self.density)
    }

    pub fn value_at(&self, q: f64) -> f64 {
        crate::numeric::interp_linear(&self.grid, &self.density, q)
    }
}

/// Complete parameter point of the smeared collision spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub gas: GasSpecies,
    pub env: Environment,
    pub sphere: SphereSurface,
    /// Gaussian resolution, keV/c.
    pub sigma_q: f64,
}

impl SpectrumParams {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sphere.validate()?;
        if !(self.sigma_q > 0.0 && self.sigma_q.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma_q must be positive, got {}",
                self.sigma_q
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `sqrt(8 m_g k_B T_g)` in keV/c: the momentum scale of the specular spectrum.
pub fn momentum_scale(gas: &GasSpecies, env: &Environment) -> f64 {
    (8.0 * gas.mass_kg() * BOLTZMANN * env.gas_temperature).sqrt() / KEV_C
}

/// Specular channel of the |q_z| rate density at `q_abs` keV/c.
pub fn specular_density(
    q_abs: f64,
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
) -> Result<f64> {
    if !(q_abs >= 0.0) {
        return Err(Error::Domain(format!(
            "|q_z| must be non-negative, got {q_abs}"
        )));
    }
    Ok(specular_amplitude(gas, env, sphere) * erfc(q_abs / momentum_scale(gas, env)))
}

/// Density at q = 0, s^-1 (keV/c)^-1.
pub(crate) fn specular_amplitude(
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
) -> f64 {
    let mkt = gas.mass_kg() * BOLTZMANN * env.gas_temperature;
    (1.0 - sphere.accommodation) * sphere.cross_section() * env.pressure_pa() / mkt * KEV_C
}

/// Kinetic-theory collision rate `pi R^2 n vbar`, s^-1.
pub fn total_collision_rate(gas: &GasSpecies, env: &Environment, sphere: &SphereSurface) -> f64 {
    let kt = BOLTZMANN * env.gas_temperature;
    let density = env.pressure_pa() / kt;
    let mean_speed = (8.0 * kt / (PI * gas.mass_kg())).sqrt();
    sphere.cross_section() * density * mean_speed
}

/// Scattering channel of one collision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Specular,
    Diffuse,
}

/// Uniform point on the unit sphere and an orthonormal tangent pair.
fn surface_frame<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.gen::<f64>();
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let n = [rho * phi.cos(), rho * phi.sin(), z];
    // Branch-free orthonormal basis around n.
    let sign = 1f64.copysign(n[2]);
    let a = -1.0 / (sign + n[2]);
    let b = n[0] * n[1] * a;
    let t1 = [1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0]];
    let t2 = [b, sign + n[1] * n[1] * a, -n[1]];
    [t1, t2, n]
}

/// Speed component normal to a surface for a flux-weighted Maxwellian.
#[inline]
fn rayleigh<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    scale * (-2.0 * u.ln()).sqrt()
}

/// Incoming velocity in the local (t1, t2, n) frame; the normal component is
/// negative (toward the surface).
#[inline]
fn incoming_local<R: Rng + ?Sized>(rng: &mut R, thermal_speed: f64) -> [f64; 3] {
    let vx: f64 = StandardNormal.sample(rng);
    let vy: f64 = StandardNormal.sample(rng);
    [
        thermal_speed * vx,
        thermal_speed * vy,
        -rayleigh(rng, thermal_speed),
    ]
}

#[inline]
fn to_global(frame: &[[f64; 3]; 3], local: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = frame[0][k] * local[0] + frame[1][k] * local[1] + frame[2][k] * local[2];
    }
    out
}

fn thermal_speed(mass_kg: f64, temperature: f64) -> f64 {
    (BOLTZMANN * temperature / mass_kg).sqrt()
}

/// Samples the momentum transferred to the sphere by one specular collision,
/// keV/c. Also returns the outward surface normal that was hit.
pub fn sample_specular_with_normal<R: Rng + ?Sized>(
    gas: &GasSpecies,
    env: &Environment,
    rng: &mut R,
) -> ([f64; 3], [f64; 3]) {
    let m = gas.mass_kg();
    let frame = surface_frame(rng);
    let v_in = incoming_local(rng, thermal_speed(m, env.gas_temperature));
    // q = m (v_in - v_out) = 2 m (v_in . n) n
    let q_normal = 2.0 * m * v_in[2] / KEV_C;
    let n = frame[2];
    ([q_normal * n[0], q_normal * n[1], q_normal * n[2]], n)
}

/// Samples the momentum transfer of one specular collision, keV/c.
pub fn sample_specular_collision<R: Rng + ?Sized>(
    gas: &GasSpecies,
    env: &Environment,
    _sphere: &SphereSurface,
    rng: &mut R,
) -> [f64; 3] {
    sample_specular_with_normal(gas, env, rng).0
}

/// Samples the momentum transfer of one diffuse collision, keV/c.
///
/// The outgoing molecule leaves with a flux-weighted Maxwellian at the surface
/// temperature, independent of how it arrived. The number of random draws does
/// not depend on the surface temperature, so a fixed seed gives common random
/// numbers across temperatures.
pub fn sample_diffuse_collision<R: Rng + ?Sized>(
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
    rng: &mut R,
) -> [f64; 3] {
    let m = gas.mass_kg();
    let frame = surface_frame(rng);
    let v_in = incoming_local(rng, thermal_speed(m, env.gas_temperature));
    let b = thermal_speed(m, sphere.surface_temperature);
    let ox: f64 = StandardNormal.sample(rng);
    let oy: f64 = StandardNormal.sample(rng);
    let v_out = [b * ox, b * oy, rayleigh(rng, b)];
    let scale = m / KEV_C;
    to_global(
        &frame,
        [
            scale * (v_in[0] - v_out[0]),
            scale * (v_in[1] - v_out[1]),
            scale * (v_in[2] - v_out[2]),
        ],
    )
}

/// Samples one collision from the specular/diffuse mixture.
pub fn sample_collision<R: Rng + ?Sized>(
    gas: &GasSpecies,
    env: &Environment,
    sphere: &SphereSurface,
    rng: &mut R,
) -> (Channel, [f64; 3]) {
    if rng.gen::<f64>() < sphere.accommodation {
        (
            Channel::Diffuse,
            sample_diffuse_collision(gas, env, sphere, rng),
        )
    } else {
        (
            Channel::Specular,
            sample_specular_collision(gas, env, sphere, rng),
        )
    }
}
