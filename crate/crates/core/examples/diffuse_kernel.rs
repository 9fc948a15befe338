//! The diffuse channel two ways: the cached Monte Carlo kernel and direct
//! quadrature, across surface temperatures.

use gasimpulse::kinetics::{
    diffuse_density, diffuse_density_quadrature, total_collision_rate, DiffuseSettings,
    Environment, GasSpecies, SphereSurface,
};

fn main() -> gasimpulse::Result<()> {
    let gas = GasSpecies::xenon();
    let env = Environment::at_pressure(1e-7);
    let grid: Vec<f64> = (0..=400).map(|i| 2.5 * i as f64).collect();
    for ts in [293.0, 400.0, 700.0, 1000.0] {
        let sphere = SphereSurface::nominal(ts, 1.0);
        let mc = diffuse_density(&grid, &gas, &env, &sphere, &DiffuseSettings::default())?;
        let quad = diffuse_density_quadrature(&grid, &gas, &env, &sphere)?;
        let worst = mc
            .density
            .iter()
            .zip(&quad.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let peak = quad.density.iter().copied().fold(0.0, f64::max);
        let rate = total_collision_rate(&gas, &env, &sphere);
        println!(
            "T_s = {ts:4.0} K: MC integral {:.1}/s, quadrature {:.1}/s, rate {:.1}/s, max gap {:.2}% of peak",
            mc.integral(),
            quad.integral(),
            rate,
            100.0 * worst / peak
        );
    }
    Ok(())
}
