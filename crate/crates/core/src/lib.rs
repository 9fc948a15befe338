//! Collision-resolved gas sensing with a levitated nanosphere.
//!
//! The crate simulates the z-motion of an optically levitated sphere struck by
//! individual gas molecules, reconstructs impulse amplitudes with a matched
//! filter, and fits the resulting spectra for partial pressure, thermal
//! accommodation and surface temperature.
//!
//! * [`kinetics`]: momentum-transfer spectrum and its smearing.
//! * [`dynsim`]: oscillator and readout simulation.
//! * [`recon`]: matched filter, event search, data-quality cuts, calibration.
//! * [`inference`]: negative-binomial likelihood, MAP fit, MCMC, summaries.
//! * [`pipeline`]: configuration, file formats and end-to-end orchestration.

pub mod dynsim;
pub mod error;
pub mod inference;
pub mod kinetics;
pub mod numeric;
pub mod pipeline;
pub mod recon;
pub mod schema;
pub mod units;

pub use error::{Error, Result};
