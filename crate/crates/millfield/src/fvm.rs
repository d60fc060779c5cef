//! Finite-volume velocity transport and diffusion on one velocity slice.
//!
//! At a fixed spatial node the velocity-space dynamics is
//!
//! ```text
//! df/dt + div_v( F(x, v) f ) = D Lap_v f ,
//! F = v (alpha - beta |v|^2) - g(x) - (grad phi . v_perp) v_perp - (A^2/2) v ,
//! D = A^2 / 2 ,
//! ```
//!
//! with `g = grad U * rho` the frozen interaction force. In the operator
//! splitting both F and D are halved and applied over the full step, so the
//! assembly below takes an explicit `scale` factor.
//!
//! The transport flux through each interior cell interface blends a
//! Lax-Wendroff and an upwind value with a van Leer limiter on the
//! upwind-biased ratio of consecutive differences,
//!
//! ```text
//! f_interface = phi(theta) f_LW + (1 - phi(theta)) f_UW ,
//! f_LW = 1/2 [ (f_k + f_l) - (tau/h) e . (F(v_l) f_l - F(v_k) f_k) ] ,
//! ```
//!
//! frozen at the current slice (Picard linearization), which makes one step
//! linear: f_new solves `(I - tau A_D) f_new = (I - tau A_T) f_old` with the
//! diffusion matrix taken implicitly (backward Euler) and solved by CG.
//! Outer interfaces carry no transport and no diffusive flux, so both
//! operators conserve slice mass exactly.

use crate::error::Result;
use crate::grid::PhaseGrid;
use crate::params::ModelParams;
use crate::sparse::{cg_solve, CgWorkspace, CsrMatrix};

/// Velocity-space drift `F(x, v)` for frozen interaction force `g` and
/// roost gradient `phi_grad` at the node.
pub fn drift(v: [f64; 2], g: [f64; 2], phi_grad: [f64; 2], params: &ModelParams) -> [f64; 2] {
    let speed2 = v[0] * v[0] + v[1] * v[1];
    let prop = params.alpha - params.beta * speed2;
    let fric = 0.5 * params.noise_a * params.noise_a;
    // (grad phi . v_perp) v_perp with v_perp = (-v_w, v_u).
    let vperp = [-v[1], v[0]];
    let roost = phi_grad[0] * vperp[0] + phi_grad[1] * vperp[1];
    [
        v[0] * prop - g[0] - roost * vperp[0] - fric * v[0],
        v[1] * prop - g[1] - roost * vperp[1] - fric * v[1],
    ]
}

/// van Leer limiter `phi(theta) = (theta + |theta|) / (1 + |theta|)`.
pub fn van_leer(theta: f64) -> f64 {
    (theta + theta.abs()) / (1.0 + theta.abs())
}

/// Upwind-biased smoothness ratio for one interface. `num` is the
/// difference one cell further upwind (`None` when that cell is outside the
/// box), `den` the difference across the interface. Degenerate denominators
/// (below 1e-14 of the slice scale) and missing upwind data count as smooth.
pub fn smoothness_ratio(num: Option<f64>, den: f64, slice_max: f64) -> f64 {
    if den.abs() <= 1e-14 * slice_max {
        return 1.0;
    }
    match num {
        Some(d) => d / den,
        None => 1.0,
    }
}

/// Interface-value weights `(c_k, c_l)` such that
/// `f_interface = c_k f_k + c_l f_l` for the limited LW/upwind blend.
/// `wind` is `F(v_interface) . e`, `fk`/`fl` are `F . e` at the two cell
/// centers, `ratio = tau / h` along the crossing axis.
#[inline]
pub fn interface_weights(wind: f64, fk: f64, fl: f64, theta: f64, ratio: f64) -> (f64, f64) {
    let lim = van_leer(theta);
    let up = if wind > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    (
        lim * 0.5 * (1.0 + ratio * fk) + (1.0 - lim) * up.0,
        lim * 0.5 * (1.0 - ratio * fl) + (1.0 - lim) * up.1,
    )
}

/// Frozen per-node drift sampler: interaction force, roost gradient and the
/// splitting scale are fixed, velocity varies.
#[derive(Debug, Clone, Copy)]
pub struct NodeDrift<'a> {
    /// Interaction force `g(x)` at the node.
    pub g: [f64; 2],
    /// Roost gradient at the node.
    pub phi_grad: [f64; 2],
    /// Operator scale: 1/2 inside the splitting, 1 for a standalone solve.
    pub scale: f64,
    /// Model constants.
    pub params: &'a ModelParams,
}

impl NodeDrift<'_> {
    /// Scaled drift at velocity `v`.
    #[inline]
    pub fn at(&self, v: [f64; 2]) -> [f64; 2] {
        let f = drift(v, self.g, self.phi_grad, self.params);
        [self.scale * f[0], self.scale * f[1]]
    }
}

/// Transport and diffusion matrices for one spatial node. Applying
/// `(I - tau a_t)` advances the explicit transport; solving
/// `(I - tau a_d) f_new = rhs` advances the implicit diffusion.
#[derive(Debug, Clone)]
pub struct VelocityOperators {
    /// Limited transport operator, frozen at the slice it was built from.
    pub a_t: CsrMatrix,
    /// Diffusion operator (zero-flux Laplacian times the scaled
    /// diffusivity); empty pattern when the noise strength is zero.
    pub a_d: CsrMatrix,
}

/// Assemble both operators for one spatial node: the transport matrix from
/// the current slice (limiter ratios frozen), the diffusion matrix from the
/// grid alone.
pub fn assemble_operators(
    slice: &[f64],
    grid: &PhaseGrid,
    nd: &NodeDrift<'_>,
    tau: f64,
) -> VelocityOperators {
    VelocityOperators {
        a_t: assemble_transport(slice, grid, nd, tau),
        a_d: assemble_diffusion(grid, diffusivity(nd.params, nd.scale)),
    }
}

/// Scaled diffusivity `scale * A^2 / 2`.
pub fn diffusivity(params: &ModelParams, scale: f64) -> f64 {
    scale * 0.5 * params.noise_a * params.noise_a
}

/// Limited transport matrix `A_T` for one slice.
pub fn assemble_transport(
    slice: &[f64],
    grid: &PhaseGrid,
    nd: &NodeDrift<'_>,
    tau: f64,
) -> CsrMatrix {
    let (n_u, n_w) = (grid.u.n, grid.w.n);
    let n = n_u * n_w;
    debug_assert_eq!(slice.len(), n);
    let slice_max = slice.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let (h_u, h_w) = (grid.u.h, grid.w.h);
    let (ru, rw) = (tau / h_u, tau / h_w);

    // Interior u interfaces: ke in 1..n_u separates cells ke-1 and ke.
    // Per edge: signed flux weights (a*c_k, a*c_l) ready to scatter.
    let mut eu = vec![(0.0f64, 0.0f64); (n_u - 1) * n_w];
    for ke in 1..n_u {
        for l in 0..n_w {
            let wc = grid.w.center(l);
            let wind = nd.at([grid.u.interface(ke), wc])[0];
            let fk = nd.at([grid.u.center(ke - 1), wc])[0];
            let fl = nd.at([grid.u.center(ke), wc])[0];
            let i_left = (ke - 1) * n_w + l;
            let i_right = ke * n_w + l;
            let den = slice[i_right] - slice[i_left];
            let num = if wind > 0.0 {
                (ke >= 2).then(|| slice[i_left] - slice[i_left - n_w])
            } else {
                (ke + 1 < n_u).then(|| slice[i_right + n_w] - slice[i_right])
            };
            let theta = smoothness_ratio(num, den, slice_max);
            let (c1, c2) = interface_weights(wind, fk, fl, theta, ru);
            eu[(ke - 1) * n_w + l] = (wind * c1, wind * c2);
        }
    }
    // Interior w interfaces: le in 1..n_w separates cells le-1 and le.
    let mut ew = vec![(0.0f64, 0.0f64); n_u * (n_w - 1)];
    for k in 0..n_u {
        let uc = grid.u.center(k);
        for le in 1..n_w {
            let wind = nd.at([uc, grid.w.interface(le)])[1];
            let fk = nd.at([uc, grid.w.center(le - 1)])[1];
            let fl = nd.at([uc, grid.w.center(le)])[1];
            let i_lo = k * n_w + (le - 1);
            let i_hi = k * n_w + le;
            let den = slice[i_hi] - slice[i_lo];
            let num = if wind > 0.0 {
                (le >= 2).then(|| slice[i_lo] - slice[i_lo - 1])
            } else {
                (le + 1 < n_w).then(|| slice[i_hi + 1] - slice[i_hi])
            };
            let theta = smoothness_ratio(num, den, slice_max);
            let (c1, c2) = interface_weights(wind, fk, fl, theta, rw);
            ew[k * (n_w - 1) + (le - 1)] = (wind * c1, wind * c2);
        }
    }

    // Scatter edges into rows; columns ascend as
    // (k-1,l), (k,l-1), self, (k,l+1), (k+1,l).
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut vals = Vec::with_capacity(5 * n);
    row_ptr.push(0usize);
    let (inv_hu, inv_hw) = (1.0 / h_u, 1.0 / h_w);
    for k in 0..n_u {
        for l in 0..n_w {
            let idx = k * n_w + l;
            let mut diag = 0.0;
            // Outflux through the east/north interfaces (this cell is the
            // left/lower cell K), influx through west/south (this cell is L).
            let west = (k >= 1).then(|| eu[(k - 1) * n_w + l]);
            let east = (k + 1 < n_u).then(|| eu[k * n_w + l]);
            let south = (l >= 1).then(|| ew[k * (n_w - 1) + (l - 1)]);
            let north = (l + 1 < n_w).then(|| ew[k * (n_w - 1) + l]);
            if let Some((ac1, ac2)) = west {
                cols.push((idx - n_w) as u32);
                vals.push(-ac1 * inv_hu);
                diag -= ac2 * inv_hu;
            }
            if let Some((ac1, ac2)) = south {
                cols.push((idx - 1) as u32);
                vals.push(-ac1 * inv_hw);
                diag -= ac2 * inv_hw;
            }
            let diag_slot = vals.len();
            cols.push(idx as u32);
            vals.push(0.0);
            if let Some((ac1, ac2)) = north {
                vals[diag_slot] += ac1 * inv_hw;
                cols.push((idx + 1) as u32);
                vals.push(ac2 * inv_hw);
            }
            if let Some((ac1, ac2)) = east {
                vals[diag_slot] += ac1 * inv_hu;
                cols.push((idx + n_w) as u32);
                vals.push(ac2 * inv_hu);
            }
            vals[diag_slot] += diag;
            row_ptr.push(cols.len());
        }
    }
    CsrMatrix { n, row_ptr, cols, vals }
}

/// Diffusion operator `A_D = d Lap_v` with zero-flux closure: boundary
/// interfaces are simply absent, so every row sums to zero and the matrix
/// is symmetric.
pub fn assemble_diffusion(grid: &PhaseGrid, d: f64) -> CsrMatrix {
    let (n_u, n_w) = (grid.u.n, grid.w.n);
    let n = n_u * n_w;
    if d == 0.0 {
        return CsrMatrix { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() };
    }
    let cu = d / (grid.u.h * grid.u.h);
    let cw = d / (grid.w.h * grid.w.h);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n_u {
        for l in 0..n_w {
            let idx = k * n_w + l;
            let mut row = Vec::with_capacity(5);
            let mut diag = 0.0;
            if k >= 1 {
                row.push((idx - n_w, cu));
                diag -= cu;
            }
            if l >= 1 {
                row.push((idx - 1, cw));
                diag -= cw;
            }
            let diag_slot = row.len();
            row.push((idx, 0.0));
            if l + 1 < n_w {
                row.push((idx + 1, cw));
                diag -= cw;
            }
            if k + 1 < n_u {
                row.push((idx + n_w, cu));
                diag -= cu;
            }
            row[diag_slot].1 = diag;
            rows.push(row);
        }
    }
    CsrMatrix::from_rows(&rows)
}

/// Backward-Euler system `I - tau A_D`. Strictly diagonally dominant with
/// positive diagonal for any `tau > 0`.
pub fn implicit_system(a_d: &CsrMatrix, tau: f64) -> CsrMatrix {
    let mut m = a_d.clone();
    if m.cols.is_empty() {
        // Zero diffusion: explicit identity pattern.
        m.cols = (0..m.n as u32).collect();
        m.vals = vec![1.0; m.n];
        m.row_ptr = (0..=m.n).collect();
        return m;
    }
    for v in m.vals.iter_mut() {
        *v = -tau * *v;
    }
    for r in 0..m.n {
        for idx in m.row_ptr[r]..m.row_ptr[r + 1] {
            if m.cols[idx] as usize == r {
                m.vals[idx] += 1.0;
            }
        }
    }
    m
}

/// CG controls for the implicit diffusion solve.
#[derive(Debug, Clone, Copy)]
pub struct CgParams {
    /// Relative residual tolerance.
    pub tol: f64,
    /// Iteration cap as a multiple of the unknown count.
    pub max_iter_factor: usize,
}

impl Default for CgParams {
    fn default() -> Self {
        CgParams { tol: 1e-10, max_iter_factor: 10 }
    }
}

/// Reusable buffers for [`velocity_halfstep`].
#[derive(Debug, Default)]
pub struct HalfstepScratch {
    rhs: Vec<f64>,
    cg: CgWorkspace,
}

/// Advance one slice by one velocity substep: explicit limited transport,
/// implicit diffusion. `system` must be `I - tau a_d` when diffusion is
/// active and `None` for the zero-noise case. Returns the CG iteration
/// count.
pub fn velocity_halfstep(
    slice: &mut [f64],
    a_t: &CsrMatrix,
    system: Option<&CsrMatrix>,
    tau: f64,
    cg: &CgParams,
    scratch: &mut HalfstepScratch,
) -> Result<usize> {
    let n = slice.len();
    scratch.rhs.resize(n, 0.0);
    a_t.matvec(slice, &mut scratch.rhs);
    for i in 0..n {
        scratch.rhs[i] = slice[i] - tau * scratch.rhs[i];
    }
    match system {
        None => {
            slice.copy_from_slice(&scratch.rhs);
            Ok(0)
        }
        Some(m) => {
            // Warm start from the rhs: the system is a small perturbation of
            // the identity.
            slice.copy_from_slice(&scratch.rhs);
            cg_solve(m, &scratch.rhs, slice, cg.tol, cg.max_iter_factor * n, &mut scratch.cg)
        }
    }
}

/// Largest stable-step bound from the velocity operators alone:
/// `min(h_u/F_max, h_w/F_max)` with the unscaled drift bound evaluated at
/// cell centers and interface midpoints plus the force and roost bounds.
pub fn velocity_drift_limit(
    grid: &PhaseGrid,
    params: &ModelParams,
    g_max: [f64; 2],
    roost_grad_max: f64,
) -> f64 {
    let fric = 0.5 * params.noise_a * params.noise_a;
    let mut u_pts: Vec<f64> = (0..grid.u.n).map(|k| grid.u.center(k)).collect();
    u_pts.extend((0..=grid.u.n).map(|k| grid.u.interface(k)));
    let mut w_pts: Vec<f64> = (0..grid.w.n).map(|l| grid.w.center(l)).collect();
    w_pts.extend((0..=grid.w.n).map(|l| grid.w.interface(l)));
    let v2_max = u_pts.iter().fold(0.0f64, |a, &u| a.max(u * u))
        + w_pts.iter().fold(0.0f64, |a, &w| a.max(w * w));
    let roost_bound = roost_grad_max * v2_max;

    let mut f_u = 0.0f64;
    let mut f_w = 0.0f64;
    for &u in &u_pts {
        for &w in &w_pts {
            let prop = params.alpha - params.beta * (u * u + w * w);
            f_u = f_u.max((u * prop - fric * u).abs());
            f_w = f_w.max((w * prop - fric * w).abs());
        }
    }
    f_u += g_max[0] + roost_bound;
    f_w += g_max[1] + roost_bound;

    let mut limit = f64::INFINITY;
    if f_u > 0.0 {
        limit = limit.min(grid.u.h / f_u);
    }
    if f_w > 0.0 {
        limit = limit.min(grid.w.h / f_w);
    }
    limit
}

/// Largest stable-step bound from spatial transport:
/// `min(h_x/|u|_max, h_y/|w|_max)` over the velocity cell centers.
pub fn spatial_advection_limit(grid: &PhaseGrid) -> f64 {
    let u_max = grid.u.center(0).abs().max(grid.u.center(grid.u.n - 1).abs());
    let w_max = grid.w.center(0).abs().max(grid.w.center(grid.w.n - 1).abs());
    let mut limit = f64::INFINITY;
    if u_max > 0.0 {
        limit = limit.min(grid.x.h / u_max);
    }
    if w_max > 0.0 {
        limit = limit.min(grid.y.h / w_max);
    }
    limit
}

/// CFL time step: `cfl` times the tighter of the spatial and velocity
/// limits, optionally capped.
pub fn cfl_tau(
    grid: &PhaseGrid,
    params: &ModelParams,
    g_max: [f64; 2],
    roost_grad_max: f64,
    cfl: f64,
    tau_max: Option<f64>,
) -> f64 {
    let limit = velocity_drift_limit(grid, params, g_max, roost_grad_max)
        .min(spatial_advection_limit(grid));
    let mut tau = cfl * limit;
    if let Some(cap) = tau_max {
        tau = tau.min(cap);
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bounds;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn vel_grid(n: usize) -> PhaseGrid {
        PhaseGrid::new(Bounds::symmetric(50.0, 3.0), [4, 4, n, n]).unwrap()
    }

    #[test]
    fn drift_balances_at_cruise_with_matched_friction() {
        // alpha = 0.07, beta = 0.05, A = 0.2: at v = (1, 0) the propulsion
        // 0.07 - 0.05 equals the friction A^2/2 = 0.02 exactly.
        let mut p = ModelParams::reference();
        p.noise_a = 0.2;
        let f = drift([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], &p);
        assert!(f[0].abs() < 1e-15 && f[1].abs() < 1e-15, "drift {f:?}");
    }

    #[test]
    fn drift_includes_force_and_roost_terms() {
        let p = ModelParams::reference();
        let g = [0.3, -0.1];
        let f = drift([0.0, 0.0], g, [0.0, 0.0], &p);
        assert_eq!(f, [-0.3, 0.1]);
        // Roost projection: v = (1, 0), v_perp = (0, 1); only the y
        // component of grad phi acts, and it pushes along v_perp.
        let f = drift([1.0, 0.0], [0.0, 0.0], [0.5, 0.7], &p);
        let prop = 0.07 - 0.05;
        assert!((f[0] - prop).abs() < 1e-15);
        assert!((f[1] - (-0.7)).abs() < 1e-15);
    }

    #[test]
    fn van_leer_reference_values() {
        assert_eq!(van_leer(0.0), 0.0);
        assert_eq!(van_leer(1.0), 1.0);
        assert!((van_leer(3.0) - 1.5).abs() < 1e-15);
        assert_eq!(van_leer(-2.0), 0.0);
    }

    proptest! {
        #[test]
        fn van_leer_identity_and_bounds(theta in 1e-6f64..1e6) {
            let lhs = van_leer(theta) / theta;
            let rhs = van_leer(1.0 / theta);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs));
            let v = van_leer(theta);
            prop_assert!(v >= 0.0 && v <= 2.0f64.min(2.0 * theta) + 1e-15);
        }
    }

    #[test]
    fn smoothness_ratio_rules() {
        // Linear data: consecutive differences equal.
        assert_eq!(smoothness_ratio(Some(0.5), 0.5, 1.0), 1.0);
        // Extremum: sign change gives a negative ratio.
        assert!(smoothness_ratio(Some(0.5), -0.5, 1.0) < 0.0);
        // Flat ahead: degenerate denominator counts as smooth.
        assert_eq!(smoothness_ratio(Some(0.7), 1e-16, 1.0), 1.0);
        // Missing upwind cell counts as smooth.
        assert_eq!(smoothness_ratio(None, 0.5, 1.0), 1.0);
        // All-zero slice.
        assert_eq!(smoothness_ratio(Some(0.0), 0.0, 0.0), 1.0);
    }

    #[test]
    fn interface_weights_reduce_to_known_cases() {
        // theta = 1: pure LW. f_k = 1, f_l = 0, F = a everywhere:
        // f_int = 1/2 (1 + tau a / h).
        let (a, tau, h) = (0.8, 0.05, 0.2);
        let (c1, _c2) = interface_weights(a, a, a, 1.0, tau / h);
        let f_int = c1 * 1.0;
        assert!((f_int - 0.5 * (1.0 + tau * a / h)).abs() < 1e-15);
        // theta <= 0: pure upwind.
        let (c1, c2) = interface_weights(a, a, a, -0.3, tau / h);
        assert_eq!((c1, c2), (1.0, 0.0));
        let (c1, c2) = interface_weights(-a, -a, -a, 0.0, tau / h);
        assert_eq!((c1, c2), (0.0, 1.0));
    }

    #[test]
    fn diffusion_matrix_is_symmetric_zero_rowsum_and_dominant_system() {
        let grid = vel_grid(8);
        let mut p = ModelParams::reference();
        p.noise_a = 1.5;
        let d = diffusivity(&p, 0.5);
        let a_d = assemble_diffusion(&grid, d);
        assert_eq!(a_d.asymmetry(), 0.0);
        for r in 0..a_d.n {
            assert!(a_d.row_sum(r).abs() < 1e-13, "row {r} sums to {}", a_d.row_sum(r));
        }
        let tau = 0.01;
        let sys = implicit_system(&a_d, tau);
        assert!(sys.dominance_margin() > 0.0);
        // Interior diagonal: 1 + tau d (2/h_u^2 + 2/h_w^2).
        let idx = 3 * grid.w.n + 3;
        let expect = 1.0 + tau * d * (2.0 / (grid.u.h * grid.u.h) + 2.0 / (grid.w.h * grid.w.h));
        assert!((sys.get(idx, idx) - expect).abs() < 1e-13);
    }

    #[test]
    fn implicit_system_without_diffusion_is_identity() {
        let grid = vel_grid(5);
        let a_d = assemble_diffusion(&grid, 0.0);
        assert!(a_d.cols.is_empty());
        let sys = implicit_system(&a_d, 0.3);
        let x: Vec<f64> = (0..sys.n).map(|i| i as f64 * 0.1 - 1.0).collect();
        let mut y = vec![0.0; sys.n];
        sys.matvec(&x, &mut y);
        assert_eq!(x, y);
    }

    fn random_slice(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn transport_conserves_slice_mass() {
        let grid = vel_grid(12);
        let mut p = ModelParams::reference();
        p.noise_a = 0.4;
        let nd = NodeDrift { g: [0.2, -0.4], phi_grad: [0.0, 0.0], scale: 0.5, params: &p };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let slice = random_slice(12, &mut rng);
        let tau = 0.01;
        let a_t = assemble_transport(&slice, &grid, &nd, tau);
        let mut af = vec![0.0; slice.len()];
        a_t.matvec(&slice, &mut af);
        let total: f64 = af.iter().sum();
        let scale: f64 = slice.iter().sum();
        assert!(total.abs() < 1e-12 * scale.max(1.0), "transport leaks mass: {total}");
    }

    #[test]
    fn halfstep_conserves_mass_with_and_without_diffusion() {
        let grid = vel_grid(10);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let tau = 0.02;
        let cg = CgParams::default();

        for noise in [0.0, 1.2] {
            let mut p = ModelParams::reference();
            p.noise_a = noise;
            let nd = NodeDrift { g: [0.1, 0.05], phi_grad: [0.0, 0.0], scale: 0.5, params: &p };
            let mut slice = random_slice(10, &mut rng);
            let before: f64 = slice.iter().sum();
            let ops = assemble_operators(&slice, &grid, &nd, tau);
            let system = (noise > 0.0).then(|| implicit_system(&ops.a_d, tau));
            let mut scratch = HalfstepScratch::default();
            velocity_halfstep(&mut slice, &ops.a_t, system.as_ref(), tau, &cg, &mut scratch)
                .unwrap();
            let after: f64 = slice.iter().sum();
            let tol = if noise > 0.0 { 1e-9 } else { 1e-12 };
            assert!(
                (after - before).abs() < tol * before.abs().max(1.0),
                "noise {noise}: mass {before} -> {after}"
            );
        }
    }

    #[test]
    fn diffusion_spreads_a_spike_without_new_extrema() {
        let grid = vel_grid(9);
        let mut p = ModelParams::reference();
        p.noise_a = 1.0;
        // No transport: isolate the implicit diffusion behavior.
        let a_d = assemble_diffusion(&grid, diffusivity(&p, 1.0));
        let tau = 0.05;
        let sys = implicit_system(&a_d, tau);
        let n = grid.n_vel();
        let mut f = vec![0.0; n];
        f[4 * 9 + 4] = 1.0;
        let rhs = f.clone();
        let mut ws = CgWorkspace::default();
        cg_solve(&sys, &rhs, &mut f, 1e-12, 10 * n, &mut ws).unwrap();
        let sum: f64 = f.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!(f.iter().all(|&v| v >= -1e-12 && v <= 1.0 + 1e-12));
        assert!(f[4 * 9 + 5] > 0.0, "diffusion reaches the neighbor cell");
    }

    #[test]
    fn cfl_follows_grid_and_force_scaling() {
        let grid = vel_grid(15);
        let p = ModelParams::reference();
        let tau0 = cfl_tau(&grid, &p, [0.0, 0.0], 0.0, 0.45, None);
        assert!(tau0 > 0.0 && tau0.is_finite());
        // Stronger forces shrink the step.
        let tau1 = cfl_tau(&grid, &p, [5.0, 5.0], 0.0, 0.45, None);
        assert!(tau1 < tau0);
        // The cap wins when tighter.
        let tau2 = cfl_tau(&grid, &p, [0.0, 0.0], 0.0, 0.45, Some(tau0 * 0.5));
        assert!((tau2 - tau0 * 0.5).abs() < 1e-15);
        // High noise: friction dominates the drift bound.
        let mut noisy = p;
        noisy.noise_a = 3.0;
        let tau3 = cfl_tau(&grid, &noisy, [0.0, 0.0], 0.0, 0.45, None);
        assert!(tau3 < tau0);
    }
}
