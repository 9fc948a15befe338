//! Ensemble MCMC over a joint Xe model: intervals, the T_s upper limit and
//! convergence diagnostics.

use gasimpulse::inference::{
    fit_map, run_mcmc, sample_counts, summarize, DatasetParams, FitDataset, JointModel,
    McmcSettings, ModelParams, ModelSettings, NelderMeadSettings,
};
use gasimpulse::kinetics::{GasSpecies, ResponseTable, ResponseTableSpec};
use gasimpulse::recon::{default_bin_edges, BinnedSpectrum, SpectrumMeta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() -> gasimpulse::Result<()> {
    let edges = default_bin_edges();
    let table = Arc::new(ResponseTable::build(ResponseTableSpec::new(
        GasSpecies::xenon(),
        edges.clone(),
        60.0,
        60.0,
    ))?);
    let pressures = [5e-8, 7.5e-8, 1e-7];
    let truth = ModelParams {
        alpha: 0.61,
        surface_temperature: 293.0,
        datasets: pressures
            .iter()
            .map(|&p| DatasetParams {
                pressure: p,
                sigma_q: 60.0,
                bg_amplitude: 3950.0,
                bg_mean: 55.0,
            })
            .collect(),
    };
    let ids: Vec<String> = (0..3).map(|i| format!("Xe_{i}")).collect();
    let spectrum = |id: &str| BinnedSpectrum {
        bin_edges: edges.clone(),
        counts: vec![0; edges.len() - 1],
        live_time: 21.6,
        meta: SpectrumMeta {
            dataset_id: id.into(),
            ..SpectrumMeta::default()
        },
    };
    let settings = ModelSettings::default();
    let shells = ids
        .iter()
        .map(|id| FitDataset {
            spectrum: spectrum(id),
            sigma_cal: 60.0,
        })
        .collect();
    let generator = JointModel::new(table.clone(), shells, settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut s = spectrum(id);
        s.counts = sample_counts(
            &generator.expected_counts(i, &truth)?,
            settings.overdispersion,
            &mut rng,
        )?;
        data.push(FitDataset {
            spectrum: s,
            sigma_cal: 60.0,
        });
    }
    let model = JointModel::new(table, data, settings)?;
    let map = fit_map(
        &model,
        &model.initial_guess(0.5, 300.0, &pressures)?,
        &NelderMeadSettings::default(),
    )?;
    let post = run_mcmc(&model, &map.params, &McmcSettings::default())?;
    let s = summarize(&post, "Xe", &ids)?;
    println!(
        "{} walkers x {} kept steps, acceptance {:.2}",
        post.n_walkers, post.n_kept, post.acceptance
    );
    println!(
        "alpha {:.3} [{:.3}, {:.3}] (truth 0.61)",
        s.alpha_med, s.alpha_lo, s.alpha_hi
    );
    println!("T_s < {:.0} K at 95%", s.ts_ul_95);
    for d in &s.datasets {
        println!(
            "  {}: P {:.3e} [{:.3e}, {:.3e}]",
            d.dataset_id, d.pressure.median, d.pressure.lo, d.pressure.hi
        );
    }
    for (name, (r, e)) in post.names.iter().zip(post.rhat.iter().zip(&post.ess)) {
        println!("  {name:>14}: R-hat {r:.3}, ESS {e:.0}");
    }
    println!("converged: {}", s.converged);
    Ok(())
}
