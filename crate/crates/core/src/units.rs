//! Physical constants and the keV/c momentum unit.
//!
//! Everything inside the kinetics and dynamics code runs in SI. Momenta cross
//! module boundaries in keV/c and pressures in mbar.

use serde::{Deserialize, Serialize};

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Speed of light, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
/// One keV/c expressed in kg m/s.
pub const KEV_C: f64 = 1.0e3 * ELEMENTARY_CHARGE / SPEED_OF_LIGHT;
/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;

/// A momentum in keV/c.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Momentum(f64);

impl Momentum {
    pub const fn from_kev_c(value: f64) -> Self {
        Momentum(value)
    }

    pub fn from_si(kg_m_per_s: f64) -> Self {
        Momentum(kg_m_per_s / KEV_C)
    }

    pub const fn kev_c(self) -> f64 {
        self.0
    }

    pub fn si(self) -> f64 {
        self.0 * KEV_C
    }
}

impl std::fmt::Display for Momentum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} keV/c", self.0)
    }
}

/// Standard-quantum-limit impulse scale `sqrt(hbar m Omega)` in keV/c.
pub fn impulse_sql(mass_kg: f64, angular_frequency: f64) -> f64 {
    (HBAR * mass_kg * angular_frequency).sqrt() / KEV_C
}
