//! Sweep the velocity-noise amplitude through the three swarming regimes:
//! a single mill at A=0, a double mill at moderate noise (a single-mill
//! start abandons its rotation sense and the two counter-rotating branches
//! merge), and a disordered centered blob at strong noise.
//!
//! Runs four kinetic marches on a reduced grid; expect ten-plus minutes.
//!
//! Run with: cargo run --release --example noise_transition

use millfield::analysis::{marginal_peaks, nearest_space_node, radial_profile, velocity_marginals};
use millfield::driver::{initial_condition, run_to_stationary, IcKind, RunOptions, RunOutcome};
use millfield::grid::{Bounds, PhaseGrid};
use millfield::params::ModelParams;

fn march(a: f64, ic: IcKind, opts: &RunOptions) -> millfield::Result<RunOutcome> {
    let mut params = ModelParams::reference();
    params.noise_a = a;
    let grid = PhaseGrid::new(Bounds::symmetric(50.0, 2.0), [24, 24, 24, 24])?;
    let field = initial_condition(ic, &grid, &params)?;
    let out = run_to_stationary(field, &params, opts)?;
    println!(
        "A={a:<6} ic={:<11} stopped t={:6.1} steps={:5} mill_distance={:.5}",
        ic.name(),
        out.t,
        out.steps,
        out.history.last().expect("history").mill_distance
    );
    Ok(out)
}

fn main() -> millfield::Result<()> {
    let mill_opts = RunOptions {
        tol_stat: 1.5e-3,
        t_max: 200.0,
        history_every: 200,
        ..RunOptions::default()
    };
    // The merge at A=0.123 completes around t=350; run past it.
    let merge_opts = RunOptions {
        tol_stat: 5e-4,
        t_max: 400.0,
        history_every: 200,
        ..RunOptions::default()
    };
    let disorder_opts = RunOptions {
        tol_stat: 1e-3,
        t_max: 120.0,
        history_every: 200,
        ..RunOptions::default()
    };

    println!("noise sweep on a 24^4 grid, cruise speed {:.4}", ModelParams::reference().cruise_speed());
    let single0 = march(0.0, IcKind::SingleMill, &mill_opts)?;
    let double0 = march(0.0, IcKind::DoubleMill, &mill_opts)?;
    let merged = march(0.123, IcKind::SingleMill, &merge_opts)?;
    let disordered = march(0.9, IcKind::SingleMill, &disorder_opts)?;

    let mill = |out: &RunOutcome| out.history.last().expect("history").mill_distance;
    let (s0, d0, m, dis) = (mill(&single0), mill(&double0), mill(&merged), mill(&disordered));

    // At A=0 the two starts keep distinct mill distances: that is the split.
    println!("\nA=0 split: single={s0:.5} double={d0:.5} ratio={:.1}", d0 / s0);
    assert!(d0 >= 2.0 * s0, "double branch should sit well above single: {d0:.5} vs {s0:.5}");

    // At A=0.123 the single-mill start has risen to the double branch.
    println!("A=0.123 single start lands at {m:.5} (double branch {d0:.5})");
    assert!(m >= 4.0 * s0, "noise should lift the single branch: {m:.5} vs floor {s0:.5}");
    assert!(m >= 0.5 * d0, "merged value should approach the double branch: {m:.5} vs {d0:.5}");

    // Shape check: the merged state is a genuine double mill, so the
    // tangential marginal at the top of the annulus carries two antipodal
    // peaks, one per rotation sense.
    let grid = merged.field.grid.clone();
    let rho = merged.field.marginal_density();
    let profile = radial_profile(&rho, 2.0 * grid.x.h);
    let peak = profile
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty profile");
    let (i, j) = nearest_space_node(&grid, [0.0, peak.r]);
    let (u_marg, _) = velocity_marginals(&merged.field, i, j);
    let peaks = marginal_peaks(&u_marg, 0.25);
    println!("tangential marginal at (0, {:.1}): {} peaks", peak.r, peaks.len());
    assert_eq!(peaks.len(), 2, "double mill should be bimodal, got {peaks:?}");
    let (a, b) = (grid.u.center(peaks[0]), grid.u.center(peaks[1]));
    assert!(
        (a + b).abs() <= 1.5 * grid.u.h,
        "peaks should be antipodal: {a:.3} and {b:.3}"
    );

    // Strong noise: density collapses to a centered blob and the velocity
    // marginals turn unimodal around zero.
    let rho = disordered.field.marginal_density();
    let profile = radial_profile(&rho, 2.0 * grid.x.h);
    let center = profile.first().expect("center bin");
    let peak = profile
        .iter()
        .filter(|b| b.count > 0)
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty profile");
    println!("A=0.9 radial profile peaks at r={:.1} (center mean {:.3e})", peak.r, center.mean);
    assert!(peak.r <= center.r + 1e-12, "disordered density should peak at the center");
    let (imax, jmax) = {
        let mut best = (0, 0);
        let mut val = f64::MIN;
        for i in 0..grid.x.n {
            for j in 0..grid.y.n {
                if rho.values[[i, j]] > val {
                    val = rho.values[[i, j]];
                    best = (i, j);
                }
            }
        }
        best
    };
    let (u_marg, w_marg) = velocity_marginals(&disordered.field, imax, jmax);
    for (name, marg) in [("u", &u_marg), ("w", &w_marg)] {
        let peaks = marginal_peaks(marg, 0.25);
        assert_eq!(peaks.len(), 1, "{name}-marginal should be unimodal, got {peaks:?}");
        let v = grid.u.center(peaks[0]);
        assert!(v.abs() <= 1.5 * grid.u.h, "{name}-marginal should peak near 0, got {v:.3}");
    }
    println!("disordered state confirmed: centered density, unimodal marginals");

    println!("\nmill distance vs noise: 0.0 -> {s0:.5}/{d0:.5} (split), 0.123 -> {m:.5} (merged), 0.9 -> {dis:.5}");
    Ok(())
}
