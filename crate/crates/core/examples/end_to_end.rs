//! Full chain for one gas: calibration, three simulated datasets, cuts,
//! joint fit, MCMC, gauge comparison and figure tables.
//!
//! cargo run --release --example end_to_end [gas] [duration_s] [out_dir]

use gasimpulse::pipeline::{nominal_alpha, run_experiment, RunConfig};

fn main() -> gasimpulse::Result<()> {
    let mut args = std::env::args().skip(1);
    let gas = args.next().unwrap_or_else(|| "Xe".into());
    let duration: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(20.0);
    let out = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("gasimpulse_end_to_end"));
    let config = RunConfig {
        alpha: nominal_alpha(&gas)?,
        gas,
        duration,
        out_dir: out,
        ..RunConfig::default()
    };
    let r = run_experiment(&config)?;
    for d in &r.datasets {
        println!(
            "{}: {} counts, {:.1} s live of {:.1} s, in-situ sigma {:.1} keV/c",
            d.dataset_id,
            d.total_counts,
            d.live_time,
            d.raw_time,
            d.calibration_sigma.unwrap_or(f64::NAN)
        );
    }
    if let Some(f) = &r.fit {
        let s = &f.summary;
        println!(
            "alpha {:.3} [{:.3}, {:.3}] (truth {})",
            s.alpha_med, s.alpha_lo, s.alpha_hi, config.alpha
        );
        println!("T_s < {:.0} K (95%)", s.ts_ul_95);
        for (d, p) in s.datasets.iter().zip(&config.pressures) {
            println!(
                "  {}: P {:.3e} (truth {p:.1e})",
                d.dataset_id, d.pressure.median
            );
        }
        if let Some(g) = &f.gauge {
            println!(
                "gauge = {:.3} x fit + {:.2e} mbar",
                g.fit.slope, g.fit.intercept
            );
        }
        println!("max R-hat {:.3}, min ESS {:.0}", s.max_rhat, s.min_ess);
    }
    println!(
        "report {} written to {}",
        r.report_hash,
        config.out_dir.display()
    );
    Ok(())
}
