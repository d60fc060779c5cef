//! Convergence ladder for the spatial transport step alone: advect a smooth
//! Gaussian bump at constant velocity and fit the error slope. The Bezier
//! interpolation is designed to be third order on smooth data.
//!
//! Run with: cargo run --release --example advection_accuracy

use millfield::analysis::fit_order;
use millfield::field::DistributionField;
use millfield::grid::{Bounds, PhaseGrid};
use millfield::semilag::{advect_step, AdvectWorkspace};

const SIGMA: f64 = 0.25;
const START: [f64; 2] = [-0.5, -0.5];

fn gaussian(x: f64, y: f64, center: [f64; 2]) -> f64 {
    let dx = x - center[0];
    let dy = y - center[1];
    (-(dx * dx + dy * dy) / (2.0 * SIGMA * SIGMA)).exp()
}

fn main() -> millfield::Result<()> {
    // One velocity cell carries the bump; cell (2,2) moves at (0.75, 0.75).
    let mut ladder = Vec::new();
    println!("advecting a sigma={SIGMA} Gaussian by about one unit:");
    for n in [32usize, 48, 64, 96] {
        let grid = PhaseGrid::new(Bounds::symmetric(2.0, 3.0), [n, n, 4, 4])?;
        let v = grid.vel_center(2, 2);
        let h = grid.x.h;
        // Fixed ratio tau/h: each step moves the feet 0.4 cells.
        let tau = 0.4 * h / v[0];
        let steps = (1.0 / (0.4 * h)).round() as usize;
        let mut field = DistributionField::zeros(grid);
        for i in 0..n {
            for j in 0..n {
                let p = grid.space_pos(i, j);
                field.values[[i, j, 2, 2]] = gaussian(p[0], p[1], START);
            }
        }
        let mut ws = AdvectWorkspace::new(&grid);
        for _ in 0..steps {
            advect_step(&mut field, tau, &mut ws);
        }
        let shift = steps as f64 * tau * v[0];
        let center = [START[0] + shift, START[1] + shift];
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = grid.space_pos(i, j);
                let d = field.values[[i, j, 2, 2]] - gaussian(p[0], p[1], center);
                sq += d * d;
            }
        }
        let err = (sq * grid.space_weight()).sqrt();
        println!("  n={n:3}  h={h:.5}  steps={steps:3}  L2 error={err:.3e}");
        ladder.push((h, err));
    }
    let slope = fit_order(&ladder);
    println!("fitted order: {slope:.3}");
    assert!((2.7..=3.3).contains(&slope), "expected third order, got {slope}");
    Ok(())
}
