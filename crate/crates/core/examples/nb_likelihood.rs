//! Negative binomial counts with 5% excess variance: sampled moments and the
//! log-likelihood around its maximum.

use gasimpulse::inference::{nb_log_pmf, nb_tail_significance, sample_nb, DEFAULT_OVERDISPERSION};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gasimpulse::Result<()> {
    let delta = DEFAULT_OVERDISPERSION;
    let mu = 400.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| sample_nb(mu, delta, &mut rng).map(|k| k as f64))
        .collect::<Result<_, _>>()?;
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let v = draws.iter().map(|k| (k - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    println!(
        "mu = {mu}: sample mean {m:.2}, variance {v:.1} (model {:.1})",
        mu * (1.0 + delta)
    );

    let k = 430;
    println!("log-likelihood of k = {k} versus mu:");
    for mu in [380.0, 400.0, 420.0, 430.0, 440.0, 460.0] {
        println!("  mu {mu:5.0}: {:9.4}", nb_log_pmf(k, mu, delta)?);
    }
    for (k, mu) in [(1, 0.02), (430, 400.0), (500, 400.0)] {
        println!(
            "k = {k} at mu = {mu}: {:.2} sigma",
            nb_tail_significance(k, mu, delta)?
        );
    }
    Ok(())
}
