//! Exact discretization of the damped oscillator driven by white force noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One-step propagator for the state `(z, v)` over a fixed interval.
#[derive(Debug, Clone, Copy)]
pub struct ExactStepper {
    phi: [[f64; 2]; 2],
    /// Lower-triangular Cholesky factor of the one-step process noise.
    chol: [[f64; 2]; 2],
}

impl ExactStepper {
    /// `omega` is the undamped angular frequency, `gamma` the energy damping
    /// rate, `force_psd` the one-sided force PSD in N^2/Hz.
    pub fn new(mass: f64, omega: f64, gamma: f64, dt: f64, force_psd: f64) -> Self {
        let beta = 0.5 * gamma;
        let wd = (omega * omega - beta * beta).sqrt();
        let e = (-beta * dt).exp();
        let (s, c) = (wd * dt).sin_cos();
        let phi = [
            [e * (c + beta * s / wd), e * s / wd],
            [-e * omega * omega * s / wd, e * (c - beta * s / wd)],
        ];
        let var_z = force_psd / (4.0 * mass * mass * gamma * omega * omega);
        let var_v = omega * omega * var_z;
        // Q = P - Phi P Phi^T with P = diag(var_z, var_v).
        let q00 = var_z - (phi[0][0] * phi[0][0] * var_z + phi[0][1] * phi[0][1] * var_v);
        let q01 = -(phi[0][0] * phi[1][0] * var_z + phi[0][1] * phi[1][1] * var_v);
        let q11 = var_v - (phi[1][0] * phi[1][0] * var_z + phi[1][1] * phi[1][1] * var_v);
        let l00 = q00.max(0.0).sqrt();
        let l10 = if l00 > 0.0 { q01 / l00 } else { 0.0 };
        let l11 = (q11 - l10 * l10).max(0.0).sqrt();
        ExactStepper {
            phi,
            chol: [[l00, 0.0], [l10, l11]],
        }
    }

    pub fn has_noise(&self) -> bool {
        self.chol[0][0] > 0.0 || self.chol[1][1] > 0.0
    }

    #[inline]
    pub fn deterministic(&self, state: [f64; 2]) -> [f64; 2] {
        [
            self.phi[0][0] * state[0] + self.phi[0][1] * state[1],
            self.phi[1][0] * state[0] + self.phi[1][1] * state[1],
        ]
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, state: [f64; 2], rng: &mut R) -> [f64; 2] {
        let mut next = self.deterministic(state);
        if self.has_noise() {
            let n0: f64 = StandardNormal.sample(rng);
            let n1: f64 = StandardNormal.sample(rng);
            next[0] += self.chol[0][0] * n0;
            next[1] += self.chol[1][0] * n0 + self.chol[1][1] * n1;
        }
        next
    }
}
