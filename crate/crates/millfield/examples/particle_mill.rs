//! The microscopic route to the same mill: integrate the interacting
//! particle system without noise from the rotating-band ensemble, bin the
//! result onto a phase grid, and check the annulus against the kinetic
//! picture.
//!
//! Run with: cargo run --release --example particle_mill

use millfield::analysis::radial_profile;
use millfield::driver::IcKind;
use millfield::grid::{Bounds, PhaseGrid};
use millfield::params::ModelParams;
use millfield::particles::{histogram, sample_ic, ParticleSim};

fn main() -> millfield::Result<()> {
    let mut params = ModelParams::reference();
    params.noise_a = 0.0;
    let n = 1000;
    let state = sample_ic(IcKind::SingleMill, n, &params, 7);
    let mut sim = ParticleSim::new(state, &params, 11)?;
    let (tau, steps) = (0.1, 1500);
    sim.run(tau, steps);
    println!("{n} particles marched to t={:.0}", sim.t);

    let cruise = params.cruise_speed();
    let mut tangential = 0usize;
    for (x, v) in sim.state.x.iter().zip(&sim.state.v) {
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let radial = (v[0] * x[0] + v[1] * x[1]).abs() / (speed * r);
        if (speed - cruise).abs() <= 0.05 * cruise && radial <= 0.1 {
            tangential += 1;
        }
    }
    println!(
        "{tangential} of {n} particles cruise tangentially (within 5% speed, ~6 degrees)"
    );
    assert!(tangential * 10 >= n * 8, "the bulk of the swarm should mill");

    let grid = PhaseGrid::new(Bounds::symmetric(50.0, 2.0), [24, 24, 24, 24])?;
    let hist = histogram(&sim.state, &grid);
    println!("histogram strays: {}", hist.out_of_range);
    assert_eq!(hist.out_of_range, 0, "grid should cover the mill");
    assert!((hist.field.total_mass() - 1.0).abs() < 1e-12);

    let rho = hist.field.marginal_density();
    let profile = radial_profile(&rho, 2.0 * grid.x.h);
    let peak = profile
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty profile");
    let center = profile.first().expect("center bin");
    println!("annulus peak at r={:.1}, center density {:.2e}", peak.r, center.mean);
    for bin in profile.iter().filter(|b| b.count > 0 && b.r < 40.0) {
        let bar = "#".repeat((60.0 * bin.mean / peak.mean) as usize);
        println!("  r={:5.1}  {:.3e}  {bar}", bin.r, bin.mean);
    }
    assert!((8.0..32.0).contains(&peak.r), "mill annulus radius {}", peak.r);
    assert!(center.mean < 0.05 * peak.mean, "empty core");
    Ok(())
}
