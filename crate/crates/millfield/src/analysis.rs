//! Closed-form references, stationary-state diagnostics and error norms.
//!
//! Everything here is deliberately independent of the 4D driver so it can
//! serve as a cross-check: the spatially homogeneous velocity equation and
//! its analytic equilibrium, the large-noise density fixed point, the
//! single-mill distance functional, radial and marginal profiles, and the
//! grid-ladder error norm with its least-squares order fit.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{DensityField, DistributionField};
use crate::fvm::{
    assemble_diffusion, assemble_transport, diffusivity, implicit_system, velocity_drift_limit,
    velocity_halfstep, CgParams, HalfstepScratch, NodeDrift,
};
use crate::grid::PhaseGrid;
use crate::params::ModelParams;
use crate::potential::{convolve_scalar, scalar_kernel_table};
use crate::semilag::interp_view;

/// Exponent of the homogeneous equilibrium: `f_eq = C exp(-q(|v|))` with
/// `q(s) = bt s^4/4 - at s^2/2`, `bt = 2 beta / A^2`, `at = 2 alpha / A^2 - 1`.
pub fn equilibrium_exponent(params: &ModelParams) -> Result<(f64, f64)> {
    if params.noise_a == 0.0 {
        return Err(Error::Domain(
            "homogeneous equilibrium needs positive noise strength".into(),
        ));
    }
    let a2 = params.noise_a * params.noise_a;
    Ok((2.0 * params.alpha / a2 - 1.0, 2.0 * params.beta / a2))
}

/// Speed at which the homogeneous equilibrium is maximal: `sqrt(at/bt)`
/// when the quadratic coefficient is focusing, `None` when the equilibrium
/// peaks at the origin instead.
pub fn equilibrium_ring_speed(params: &ModelParams) -> Result<Option<f64>> {
    let (at, bt) = equilibrium_exponent(params)?;
    Ok((at > 0.0).then(|| (at / bt).sqrt()))
}

/// Analytic homogeneous equilibrium, unit mass on the velocity grid,
/// row-major `(k, l)` with `l` fastest.
pub fn homogeneous_equilibrium(grid: &PhaseGrid, params: &ModelParams) -> Result<Vec<f64>> {
    let (at, bt) = equilibrium_exponent(params)?;
    let (n_u, n_w) = (grid.u.n, grid.w.n);
    let mut f = vec![0.0; n_u * n_w];
    for k in 0..n_u {
        for l in 0..n_w {
            let v = grid.vel_center(k, l);
            let s2 = v[0] * v[0] + v[1] * v[1];
            f[k * n_w + l] = (-(bt * s2 * s2 / 4.0 - at * s2 / 2.0)).exp();
        }
    }
    normalize_slice(grid, &mut f)?;
    Ok(f)
}

/// Scale a velocity slice to unit mass under the midpoint rule.
pub fn normalize_slice(grid: &PhaseGrid, slice: &mut [f64]) -> Result<()> {
    let mass: f64 = slice.iter().sum::<f64>() * grid.vel_weight();
    if !(mass > 0.0) {
        return Err(Error::Domain(format!("cannot normalize slice of mass {mass}")));
    }
    for v in slice.iter_mut() {
        *v /= mass;
    }
    Ok(())
}

/// Midpoint-rule L2 distance between two velocity slices.
pub fn slice_l2_distance(grid: &PhaseGrid, a: &[f64], b: &[f64]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum * grid.vel_weight()).sqrt()
}

/// Result of marching the homogeneous velocity equation to stationarity.
#[derive(Debug, Clone)]
pub struct HomogeneousOutcome {
    /// Final velocity slice, unit mass.
    pub slice: Vec<f64>,
    /// Simulated time.
    pub t: f64,
    /// Steps taken.
    pub steps: usize,
    /// Time step used.
    pub tau: f64,
    /// Whether the stationarity threshold was reached before `t_max`.
    pub converged: bool,
}

/// March `df/dt + div_v(F f) = D Lap f` (no spatial coupling, no
/// interaction force) from a uniform start until the relative L1 change
/// rate drops below `tol_stat` or `t_max` is reached. The unsplit operators
/// are applied at full scale; the time step is the velocity CFL bound.
pub fn run_homogeneous(
    grid: &PhaseGrid,
    params: &ModelParams,
    cfl: f64,
    tol_stat: f64,
    t_max: f64,
) -> Result<HomogeneousOutcome> {
    let n = grid.n_vel();
    let tau = cfl * velocity_drift_limit(grid, params, [0.0, 0.0], 0.0);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("degenerate homogeneous time step {tau}")));
    }
    let nd = NodeDrift { g: [0.0, 0.0], phi_grad: [0.0, 0.0], scale: 1.0, params };
    let d = diffusivity(params, 1.0);
    let system = (d > 0.0).then(|| implicit_system(&assemble_diffusion(grid, d), tau));
    let cg = CgParams::default();
    let mut scratch = HalfstepScratch::default();

    let mut f = vec![1.0; n];
    normalize_slice(grid, &mut f)?;
    let mut prev = vec![0.0; n];
    let mut t = 0.0;
    let mut steps = 0;
    let max_steps = (t_max / tau).ceil() as usize;
    let mut converged = false;
    while steps < max_steps {
        prev.copy_from_slice(&f);
        let a_t = assemble_transport(&f, grid, &nd, tau);
        velocity_halfstep(&mut f, &a_t, system.as_ref(), tau, &cg, &mut scratch)?;
        t += tau;
        steps += 1;
        let change: f64 = f.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
        let scale: f64 = f.iter().map(|v| v.abs()).sum();
        if change <= tol_stat * tau * scale {
            converged = true;
            break;
        }
    }
    normalize_slice(grid, &mut f)?;
    Ok(HomogeneousOutcome { slice: f, t, steps, tau, converged })
}

/// Speed of the cell where a velocity slice is maximal.
pub fn slice_peak_speed(grid: &PhaseGrid, slice: &[f64]) -> f64 {
    let mut best = 0usize;
    for (idx, v) in slice.iter().enumerate() {
        if *v > slice[best] {
            best = idx;
        }
    }
    let v = grid.vel_center(best / grid.w.n, best % grid.w.n);
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Result of the large-noise density fixed point iteration.
#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    /// Converged spatial density, unit mass.
    pub density: DensityField,
    /// L1 residual after each damped update.
    pub residuals: Vec<f64>,
}

/// Solve `rho = C exp(-(U * rho) - phi)` by damped fixed-point iteration
/// `rho <- (1-omega) rho + omega C exp(-(U * rho) - phi)`, starting from
/// the uniform density. `C` renormalizes each update to unit mass.
pub fn large_a_density(
    grid: &PhaseGrid,
    params: &ModelParams,
    omega: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointOutcome> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::Config(format!("damping omega must be in (0, 1], got {omega}")));
    }
    let kernel = scalar_kernel_table(grid, params);
    let (n_x, n_y) = (grid.x.n, grid.y.n);
    let weight = grid.space_weight();
    let mut rho = DensityField::uniform(grid.clone())?;
    let mut residuals = Vec::new();
    for _ in 0..max_iter {
        let potential = convolve_scalar(&kernel, &rho);
        let mut update = Array2::zeros((n_x, n_y));
        for i in 0..n_x {
            for j in 0..n_y {
                let x = grid.space_pos(i, j);
                let phi = params.roost_potential(x);
                update[[i, j]] = (-potential[[i, j]] - phi).exp();
            }
        }
        let mass = update.sum() * weight;
        if !(mass > 0.0) {
            return Err(Error::Domain(format!("fixed point update has mass {mass}")));
        }
        let mut residual = 0.0;
        for i in 0..n_x {
            for j in 0..n_y {
                let target = update[[i, j]] / mass;
                let next = (1.0 - omega) * rho.values[[i, j]] + omega * target;
                residual += (next - rho.values[[i, j]]).abs();
                rho.values[[i, j]] = next;
            }
        }
        residual *= weight;
        residuals.push(residual);
        if residual < tol {
            let total = rho.values.sum() * weight;
            rho.values.mapv_inplace(|v| v / total);
            return Ok(FixedPointOutcome { density: rho, residuals });
        }
    }
    Err(Error::NoConvergence {
        solver: "large_a_density",
        residual: residuals.last().copied().unwrap_or(f64::NAN),
        iterations: max_iter,
    })
}

/// Mill target velocity at position `x`: tangential with cruise speed,
/// counterclockwise (`x_perp = (-y, x)`), matching the ring initial data.
pub fn mill_velocity(x: [f64; 2], params: &ModelParams) -> [f64; 2] {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let c = params.cruise_speed();
    [-c * x[1] / r, c * x[0] / r]
}

/// Distance of a phase-space density to the single-mill state: the maximum
/// over the density support of the velocity-space second moment about the
/// mill field,
///
/// ```text
/// max_{x in supp rho} int |v - sqrt(alpha/beta) x_perp/|x||^2 f(x, v) dv .
/// ```
///
/// Support is the set of nodes with `rho >= eps_supp * max rho`; nodes
/// closer to the origin than one grid spacing are excluded (the mill field
/// is singular there and carries no mass in milling states).
pub fn mill_distance(field: &DistributionField, params: &ModelParams, eps_supp: f64) -> f64 {
    let grid = &field.grid;
    let rho = field.marginal_density();
    let rho_max = rho.max_value();
    let threshold = eps_supp * rho_max;
    let r_min = grid.x.h.min(grid.y.h);
    let vw = grid.vel_weight();
    let mut worst = 0.0f64;
    for i in 0..grid.x.n {
        for j in 0..grid.y.n {
            if rho.values[[i, j]] < threshold {
                continue;
            }
            let x = grid.space_pos(i, j);
            if (x[0] * x[0] + x[1] * x[1]).sqrt() < r_min {
                continue;
            }
            let target = mill_velocity(x, params);
            let plane = field.vel_slice(i, j);
            let mut moment = 0.0;
            for k in 0..grid.u.n {
                for l in 0..grid.w.n {
                    let v = grid.vel_center(k, l);
                    let du = v[0] - target[0];
                    let dw = v[1] - target[1];
                    moment += (du * du + dw * dw) * plane[[k, l]];
                }
            }
            worst = worst.max(moment * vw);
        }
    }
    worst
}

/// One bin of a radial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBin {
    /// Bin center radius.
    pub r: f64,
    /// Mean density over nodes in the bin.
    pub mean: f64,
    /// Number of contributing nodes.
    pub count: usize,
}

/// Radial profile of a spatial density about the origin: nodes are grouped
/// into rings of width `bin_width` and averaged.
pub fn radial_profile(density: &DensityField, bin_width: f64) -> Vec<RadialBin> {
    let grid = &density.grid;
    let r_max = {
        let cx = grid.x.lo.abs().max(grid.x.hi.abs());
        let cy = grid.y.lo.abs().max(grid.y.hi.abs());
        (cx * cx + cy * cy).sqrt()
    };
    let n_bins = (r_max / bin_width).ceil() as usize + 1;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for i in 0..grid.x.n {
        for j in 0..grid.y.n {
            let x = grid.space_pos(i, j);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let b = (r / bin_width) as usize;
            sums[b] += density.values[[i, j]];
            counts[b] += 1;
        }
    }
    (0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| RadialBin {
            r: (b as f64 + 0.5) * bin_width,
            mean: sums[b] / counts[b] as f64,
            count: counts[b],
        })
        .collect()
}

/// Velocity marginals of the slice at spatial node `(i, j)`: the first
/// vector integrates out `w` (a function of `u`), the second integrates
/// out `u`.
pub fn velocity_marginals(field: &DistributionField, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
    let grid = &field.grid;
    let plane = field.vel_slice(i, j);
    let mut m_u = vec![0.0; grid.u.n];
    let mut m_w = vec![0.0; grid.w.n];
    for k in 0..grid.u.n {
        for l in 0..grid.w.n {
            let v = plane[[k, l]];
            m_u[k] += v * grid.w.h;
            m_w[l] += v * grid.u.h;
        }
    }
    (m_u, m_w)
}

/// Indices of local maxima of `m` that reach at least `rel_threshold`
/// times the global maximum. Plateaus report their first index.
pub fn marginal_peaks(m: &[f64], rel_threshold: f64) -> Vec<usize> {
    let global = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = rel_threshold * global;
    let n = m.len();
    let mut peaks = Vec::new();
    let mut k = 0;
    while k < n {
        // Extent of the plateau starting at k.
        let mut e = k;
        while e + 1 < n && m[e + 1] == m[k] {
            e += 1;
        }
        let left_ok = k == 0 || m[k - 1] < m[k];
        let right_ok = e + 1 == n || m[e + 1] < m[k];
        if left_ok && right_ok && m[k] >= floor {
            peaks.push(k);
        }
        k = e + 1;
    }
    peaks
}

/// Node of the spatial grid closest to `target`.
pub fn nearest_space_node(grid: &PhaseGrid, target: [f64; 2]) -> (usize, usize) {
    let pick = |lo: f64, h: f64, n: usize, t: f64| -> usize {
        let i = ((t - lo) / h).round();
        (i.max(0.0) as usize).min(n - 1)
    };
    (pick(grid.x.lo, grid.x.h, grid.x.n, target[0]), pick(grid.y.lo, grid.y.h, grid.y.n, target[1]))
}

/// Resample a density onto the spatial grid of `reference` with the
/// transport interpolant, then return the midpoint-rule L2 difference.
/// Both grids must cover the same spatial box.
pub fn l2_density_error(coarse: &DensityField, reference: &DensityField) -> Result<f64> {
    let (cg, rg) = (&coarse.grid, &reference.grid);
    let same = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
    if !same([cg.x.lo, cg.x.hi], [rg.x.lo, rg.x.hi]) || !same([cg.y.lo, cg.y.hi], [rg.y.lo, rg.y.hi])
    {
        return Err(Error::Domain("density grids cover different boxes".into()));
    }
    let (n_x, n_y) = (rg.x.n, rg.y.n);
    let sx = (cg.x.n - 1) as f64 / (n_x - 1) as f64;
    let sy = (cg.y.n - 1) as f64 / (n_y - 1) as f64;
    let view = coarse.values.view();
    let mut sum = 0.0;
    for i in 0..n_x {
        for j in 0..n_y {
            // Feet are mathematically inside the coarse index box; clamp so
            // round-off at the far wall cannot spill into the zero extension.
            let fi = (i as f64 * sx).min((cg.x.n - 1) as f64);
            let fj = (j as f64 * sy).min((cg.y.n - 1) as f64);
            let v = interp_view(view, fi, fj);
            let d = v - reference.values[[i, j]];
            sum += d * d;
        }
    }
    Ok((sum * rg.space_weight()).sqrt())
}

/// Least-squares slope of `ln(error)` against `ln(h)` over a grid ladder.
pub fn fit_order(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 2, "order fit needs at least two rungs");
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in points {
        let (x, y) = (h.ln(), e.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
