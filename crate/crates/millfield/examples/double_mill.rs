//! March the kinetic equation from two counter-rotating bands with no
//! velocity noise. Unlike a particle simulation, the mean-field solver
//! carries both populations at every point, so the double mill survives
//! as a stationary state: the density is still an annulus, but at each
//! point the velocity distribution has two antipodal tangential peaks.
//!
//! Run with: cargo run --release --example double_mill

use millfield::analysis::{marginal_peaks, nearest_space_node, radial_profile, velocity_marginals};
use millfield::driver::{initial_condition, run_to_stationary, IcKind, RunOptions};
use millfield::grid::{Bounds, PhaseGrid};
use millfield::params::ModelParams;

fn main() -> millfield::Result<()> {
    let mut params = ModelParams::reference();
    params.noise_a = 0.0;
    let grid = PhaseGrid::new(Bounds::symmetric(50.0, 2.0), [24, 24, 24, 24])?;
    let field = initial_condition(IcKind::DoubleMill, &grid, &params)?;

    let opts = RunOptions {
        tol_stat: 1.5e-3,
        t_max: 200.0,
        history_every: 40,
        ..RunOptions::default()
    };
    println!("marching a {0}^4 grid, cruise speed {1:.4}", 24, params.cruise_speed());
    let out = run_to_stationary(field, &params, &opts)?;
    for s in &out.history {
        println!(
            "  t={:6.1}  change_rate={:.2e}  mill_distance={:.5}",
            s.t, s.change_rate, s.mill_distance
        );
    }
    println!(
        "stopped at t={:.1} after {} steps (stationary: {})",
        out.t, out.steps, out.converged
    );

    // The spatial shape matches the single mill: annulus with an empty core.
    let rho = out.field.marginal_density();
    let profile = radial_profile(&rho, 2.0 * grid.x.h);
    let peak = profile
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty profile");
    let center = profile.first().expect("center bin").mean;
    assert!(
        center < 0.05 * peak.mean,
        "core should be empty: center {center:.3e} vs peak {:.3e}",
        peak.mean
    );

    // The velocity signature distinguishes it: on the annulus, each
    // velocity marginal splits into two peaks at opposite speeds.
    let (i, j) = nearest_space_node(&grid, [0.0, peak.r]);
    let (m_u, _) = velocity_marginals(&out.field, i, j);
    let peaks_u = marginal_peaks(&m_u, 0.1);
    println!("annulus point ({:.1}, {:.1}):", grid.x.pos(i), grid.y.pos(j));
    let bar_max = m_u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (k, v) in m_u.iter().enumerate() {
        let bar = "#".repeat((40.0 * v / bar_max) as usize);
        println!("  u={:6.2}  {:.3e}  {bar}", grid.u.center(k), v);
    }
    assert_eq!(
        peaks_u.len(),
        2,
        "tangential marginal should be bimodal, found peaks at {peaks_u:?}"
    );
    let (a, b) = (grid.u.center(peaks_u[0]), grid.u.center(peaks_u[1]));
    assert!(
        (a + b).abs() <= 1.5 * grid.u.h,
        "peaks should be antipodal, got {a:.3} and {b:.3}"
    );
    let cruise = params.cruise_speed();
    assert!(
        (a.abs() - cruise).abs() <= 1.5 * grid.u.h && (b.abs() - cruise).abs() <= 1.5 * grid.u.h,
        "peaks should sit at cruise speed {cruise:.3}, got {a:.3} and {b:.3}"
    );
    println!("double mill confirmed: antipodal peaks at u={a:.3} and u={b:.3}");
    Ok(())
}
