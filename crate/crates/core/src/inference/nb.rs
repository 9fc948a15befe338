//! Negative-binomial counts with mean `mu` and variance `mu (1 + delta)`.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Excess variance of binned counts over Poisson.
pub const DEFAULT_OVERDISPERSION: f64 = 0.05;

/// ln P(k | mu, delta).
///
/// With `r = mu / delta` and `p = 1 / (1 + delta)` this is the usual
/// `Gamma(k + r) / (Gamma(r) k!) p^r (1 - p)^k`, rearranged so that
/// `delta -> 0` reduces smoothly to the Poisson form and large counts do not
/// lose precision to cancellation.
pub fn nb_log_pmf(k: u64, mu: f64, delta: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!(
            "expectation must be positive and finite, got {mu}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "overdispersion must be non-negative, got {delta}"
        )));
    }
    let kf = k as f64;
    if k == 0 {
        let l1p = if delta == 0.0 {
            1.0
        } else {
            delta.ln_1p() / delta
        };
        return Ok(-mu * l1p);
    }
    if k <= 64 {
        let ln_kfact = ln_gamma(kf + 1.0);
        if delta == 0.0 {
            return Ok(kf * mu.ln() - mu - ln_kfact);
        }
        let l1p = delta.ln_1p();
        let rising: f64 = (0..k).map(|i| (mu + i as f64 * delta).ln()).sum();
        return Ok(rising - ln_kfact - mu * l1p / delta - kf * l1p);
    }
    // Large k: Stirling differences keep the nearly cancelling terms apart.
    let base = kf * ((mu - kf) / (kf * (1.0 + delta))).ln_1p()
        - 0.5 * (2.0 * PI * kf).ln()
        - stirling_tail(kf);
    if delta == 0.0 {
        return Ok(base - (mu - kf));
    }
    let r = mu / delta;
    let l1p = delta.ln_1p();
    if r >= 10.0 {
        return Ok(base + (r - 0.5) * (kf / r).ln_1p() + stirling_tail(r + kf)
            - stirling_tail(r)
            - mu * l1p / delta);
    }
    Ok(kf * delta.ln() + ln_gamma(r + kf)
        - ln_gamma(r)
        - ln_gamma(kf + 1.0)
        - mu * l1p / delta
        - kf * l1p)
}

/// ln Gamma(z) - [(z - 1/2) ln z - z + ln(2 pi) / 2], for z >= 10.
fn stirling_tail(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * z2)) / z2) / z
}

/// Signed significance of observing `k` given mean `mu`: the one-sided NB
/// tail probability beyond `k` (upper when k > mu, lower otherwise)
/// expressed as a standard-normal z, positive for excesses. Exact for small
/// counts where Gaussian residuals mislead.
pub fn nb_tail_significance(k: u64, mu: f64, delta: f64) -> Result<f64> {
    nb_log_pmf(0, mu, delta)?;
    let sd = (mu * (1.0 + delta)).sqrt();
    let kf = k as f64;
    let (lo, hi, sign) = if kf > mu {
        (k, k + (60.0 * sd + 60.0) as u64, 1.0)
    } else {
        (0, k, -1.0)
    };
    // Log-sum-exp over the tail; terms far from the edge underflow harmlessly.
    let terms = (lo..=hi)
        .map(|j| nb_log_pmf(j, mu, delta))
        .collect::<Result<Vec<_>>>()?;
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()).exp();
    let p = p.clamp(1e-300, 1.0);
    if p >= 0.5 {
        return Ok(0.0);
    }
    Ok(sign * std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
}

/// Gamma-Poisson draw with the same mean and variance as [`nb_log_pmf`].
pub fn sample_nb<R: Rng + ?Sized>(mu: f64, delta: f64, rng: &mut R) -> Result<u64> {
    if !(mu >= 0.0 && mu.is_finite()) || !(delta >= 0.0) {
        return Err(Error::Domain(format!(
            "invalid negative-binomial parameters mu = {mu}, delta = {delta}"
        )));
    }
    if mu == 0.0 {
        return Ok(0);
    }
    let lambda = if delta == 0.0 {
        mu
    } else {
        Gamma::new(mu / delta, delta)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng)
    };
    if lambda <= 0.0 {
        return Ok(0);
    }
    let n: f64 = Poisson::new(lambda)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    Ok(n as u64)
}

/// Independent draws for each expectation in `mu`.
pub fn sample_counts<R: Rng + ?Sized>(mu: &[f64], delta: f64, rng: &mut R) -> Result<Vec<u64>> {
    mu.iter().map(|&m| sample_nb(m, delta, rng)).collect()
}
