//! Resolution and linearity from calibration pulses of known amplitude.

use crate::dynsim::{Impulse, ImpulseOrigin, ImpulseTrain};
use crate::error::{Error, Result};
use crate::numeric::{mean, std_dev, weighted_line_fit, LineFit};
use serde::{Deserialize, Serialize};

pub const MIN_PULSES_PER_GROUP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupResolution {
    /// keV/c.
    pub injected: f64,
    pub n: usize,
    pub mean: f64,
    /// Standard deviation of reconstructed - injected, keV/c.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub groups: Vec<GroupResolution>,
    /// Mean reconstructed amplitude against injected amplitude.
    pub fit: LineFit,
}

impl ResolutionReport {
    /// Pooled resolution over all groups, keV/c.
    pub fn pooled_sigma(&self) -> f64 {
        let (num, den) = self.groups.iter().fold((0.0, 0.0), |(a, b), g| {
            (
                a + g.sigma * g.sigma * (g.n - 1) as f64,
                b + (g.n - 1) as f64,
            )
        });
        (num / den).sqrt()
    }

    pub fn group(&self, injected: f64) -> Option<&GroupResolution> {
        self.groups
            .iter()
            .find(|g| (g.injected - injected).abs() < 1e-9)
    }
}

/// Per-group Gaussian resolution and a weighted straight-line fit of mean
/// reconstructed against injected amplitude.
pub fn measure_resolution_and_linearity(groups: &[(f64, Vec<f64>)]) -> Result<ResolutionReport> {
    if groups.len() < 2 {
        return Err(Error::InsufficientStatistics(
            "linearity needs at least two amplitude groups".into(),
        ));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (injected, values) in groups {
        if values.len() < MIN_PULSES_PER_GROUP {
            return Err(Error::InsufficientStatistics(format!(
                "{} pulses at {injected} keV/c, need {MIN_PULSES_PER_GROUP}",
                values.len()
            )));
        }
        out.push(GroupResolution {
            injected: *injected,
            n: values.len(),
            mean: mean(values),
            sigma: std_dev(values),
        });
    }
    let x: Vec<f64> = out.iter().map(|g| g.injected).collect();
    let y: Vec<f64> = out.iter().map(|g| g.mean).collect();
    // Floor on the error keeps the noiseless case well defined.
    let e: Vec<f64> = out
        .iter()
        .map(|g| (g.sigma / (g.n as f64).sqrt()).max(1e-9 * g.injected.abs().max(1.0)))
        .collect();
    let fit = weighted_line_fit(&x, &y, &e)
        .ok_or_else(|| Error::Domain("degenerate linearity fit".into()))?;
    Ok(ResolutionReport { groups: out, fit })
}

/// Dedicated calibration run: `per_amplitude` pulses at each amplitude,
/// interleaved, at `k * spacing + offset` for k = 1, 2, ...
pub fn calibration_sweep(
    amplitudes: &[f64],
    per_amplitude: usize,
    spacing: f64,
    offset: f64,
) -> ImpulseTrain {
    let mut impulses = Vec::with_capacity(amplitudes.len() * per_amplitude);
    let mut k = 1;
    for _ in 0..per_amplitude {
        for &a in amplitudes {
            impulses.push(Impulse {
                time: k as f64 * spacing + offset,
                amplitude: a,
                origin: ImpulseOrigin::Calibration,
            });
            k += 1;
        }
    }
    ImpulseTrain::new(impulses)
}
