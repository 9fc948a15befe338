use clap::{Args, Parser, Subcommand};
use gasimpulse::pipeline::{
    fit_stage, reconstruct_stage, report_stage, run_closure, run_experiment, simulate_stage,
    write_json, RunConfig,
};
use gasimpulse::Error;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_DIAGNOSTICS: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gasimpulse",
    version,
    about = "Simulate and analyze gas collisions with a levitated nanosphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the detector and write one trace per dataset.
    Simulate(Common),
    /// Reconstruct spectra from the traces in the output directory.
    Reconstruct(Common),
    /// Joint fit of the reconstructed spectra.
    Fit(Common),
    /// Collect artifacts into report.json and figure tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run every stage in memory first instead of reading artifacts.
        #[arg(long)]
        all: bool,
    },
    /// Repeated-trial coverage study on simulated spectra.
    Closure {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated gases, e.g. Kr,Xe.
        #[arg(long, value_delimiter = ',')]
        gases: Option<Vec<String>>,
    },
}

fn load(c: &Common) -> gasimpulse::Result<RunConfig> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(o) = &c.out {
        config.out_dir = o.clone();
    }
    config.validate()?;
    Ok(config)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Schema { .. } => EXIT_CONFIG,
        _ => EXIT_STAGE,
    }
}

fn converged(fit: Option<&gasimpulse::pipeline::FitReport>) -> bool {
    let Some(f) = fit else { return true };
    let s = &f.summary;
    println!(
        "alpha = {:.3} [{:.3}, {:.3}], T_s < {:.0} K (95%), max R-hat {:.3}, min ESS {:.0}",
        s.alpha_med, s.alpha_lo, s.alpha_hi, s.ts_ul_95, s.max_rhat, s.min_ess
    );
    for d in &s.datasets {
        println!(
            "  {}: P = {:.3e} [{:.3e}, {:.3e}] mbar",
            d.dataset_id, d.pressure.median, d.pressure.lo, d.pressure.hi
        );
    }
    if !s.converged {
        eprintln!("sampler diagnostics failed: R-hat or ESS outside limits");
    }
    s.converged
}

fn run(cli: Cli) -> gasimpulse::Result<u8> {
    match cli.command {
        Command::Simulate(c) => {
            let config = load(&c)?;
            let d = simulate_stage(&config)?;
            println!(
                "calibration: pulse sigma {:.1} keV/c, gof threshold {:.3}; traces in {}",
                d.pulse_sigma,
                d.gof_threshold,
                config.out_dir.display()
            );
        }
        Command::Reconstruct(c) => {
            let config = load(&c)?;
            for d in reconstruct_stage(&config)? {
                println!(
                    "{}: {} counts in {:.2} s live{}",
                    d.dataset_id,
                    d.total_counts,
                    d.live_time,
                    d.excluded
                        .map(|r| format!(" (excluded: {r})"))
                        .unwrap_or_default()
                );
            }
        }
        Command::Fit(c) => {
            let config = load(&c)?;
            if !converged(fit_stage(&config)?.as_ref()) {
                return Ok(EXIT_DIAGNOSTICS);
            }
        }
        Command::Report { common, all } => {
            let config = load(&common)?;
            let r = if all {
                run_experiment(&config)?
            } else {
                report_stage(&config)?
            };
            println!("report {} (config {})", r.report_hash, r.config_hash);
            if !converged(r.fit.as_ref()) {
                return Ok(EXIT_DIAGNOSTICS);
            }
        }
        Command::Closure {
            common,
            trials,
            gases,
        } => {
            let mut config = load(&common)?;
            if let Some(t) = trials {
                config.closure.trials = t;
            }
            if let Some(g) = gases {
                config.closure.gases = g;
            }
            config.validate()?;
            std::fs::create_dir_all(&config.out_dir)?;
            let r = run_closure(&config)?;
            write_json(&config.out_dir.join("closure.json"), &r)?;
            for g in &r.gases {
                println!(
                    "{}: alpha 68% coverage {:.2}, T_s 95% coverage {:.2} over {} trials ({} converged)",
                    g.gas, g.alpha_coverage, g.ts_coverage, g.completed, g.converged
                );
            }
            if r.gases.iter().any(|g| g.converged < g.completed) {
                return Ok(EXIT_DIAGNOSTICS);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
