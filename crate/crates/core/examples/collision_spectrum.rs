//! Specular and diffuse |q_z| rate densities for the three gases, and the
//! same spectrum after Gaussian resolution smearing.

use gasimpulse::kinetics::{
    diffuse_density, momentum_scale, smeared_spectrum, specular_density, total_collision_rate,
    DiffuseSettings, Environment, GasSpecies, SpectrumParams, SphereSurface,
};

fn main() -> gasimpulse::Result<()> {
    let env = Environment::at_pressure(1e-7);
    let grid: Vec<f64> = (0..=200).map(|i| 5.0 * i as f64).collect();
    for (gas, alpha) in [
        (GasSpecies::krypton(), 0.55),
        (GasSpecies::xenon(), 0.61),
        (GasSpecies::sf6(), 0.82),
    ] {
        let sphere = SphereSurface::nominal(293.0, alpha);
        let diffuse = diffuse_density(&grid, &gas, &env, &sphere, &DiffuseSettings::default())?;
        let smeared = smeared_spectrum(
            &SpectrumParams {
                gas: gas.clone(),
                env,
                sphere,
                sigma_q: 60.0,
            },
            &grid,
        )?;
        println!(
            "{}: scale {:.1} keV/c, total rate {:.0} /s at 1e-7 mbar",
            gas.name,
            momentum_scale(&gas, &env),
            total_collision_rate(&gas, &env, &sphere)
        );
        println!("  q [keV/c]  specular   diffuse    smeared   [/s/(keV/c)]");
        for i in (0..grid.len()).step_by(20) {
            println!(
                "  {:8.0}  {:9.3}  {:9.3}  {:9.3}",
                grid[i],
                specular_density(grid[i], &gas, &env, &sphere)?,
                diffuse.density[i],
                smeared.density[i]
            );
        }
        println!(
            "  integral of smeared spectrum {:.0} /s",
            smeared.integral()
        );
    }
    Ok(())
}
