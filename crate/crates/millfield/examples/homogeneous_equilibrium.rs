//! Space-homogeneous check: with the interaction switched off, the velocity
//! operators drive any start toward the closed-form equilibrium
//! C exp(-(bt |v|^4/4 - at |v|^2/2)), a ring on the cruise circle whose
//! radius shrinks as the noise grows.
//!
//! Run with: cargo run --release --example homogeneous_equilibrium

use millfield::analysis::{
    equilibrium_ring_speed, homogeneous_equilibrium, run_homogeneous, slice_l2_distance,
    slice_peak_speed,
};
use millfield::grid::{Bounds, PhaseGrid};
use millfield::params::ModelParams;

fn main() -> millfield::Result<()> {
    let mut params = ModelParams::reference();
    params.noise_a = 0.15;
    let grid = PhaseGrid::new(Bounds::symmetric(50.0, 3.0), [4, 4, 32, 32])?;

    let exact = homogeneous_equilibrium(&grid, &params)?;
    let out = run_homogeneous(&grid, &params, 0.45, 1e-7, 2000.0)?;
    let err = slice_l2_distance(&grid, &out.slice, &exact);
    println!(
        "A=0.15: stationary after t={:.0} ({} steps, tau={:.4}), L2 distance {:.5}",
        out.t, out.steps, out.tau, err
    );
    assert!(out.converged, "velocity march should reach stationarity");
    assert!(err < 0.02, "numerical equilibrium should match the closed form, got {err}");

    // The ring radius sqrt(at/bt) moves with the noise strength.
    for a in [0.05, 0.15, 0.2] {
        params.noise_a = a;
        let ring = equilibrium_ring_speed(&params)?.expect("ring exists for these A");
        let exact = homogeneous_equilibrium(&grid, &params)?;
        let peak = slice_peak_speed(&grid, &exact);
        println!("A={a}: analytic ring speed {ring:.4}, closed-form peak at |v|={peak:.4}");
        assert!(
            (peak - ring).abs() <= 0.5 * grid.u.h * 2.0f64.sqrt(),
            "peak cell should straddle the ring"
        );
    }
    Ok(())
}
