//! Morse pair potential, displacement kernel tables and the mean-field
//! force convolution.
//!
//! The pair potential is
//!
//! ```text
//! U(r) = -C_a exp(-r/l_a) + C_r exp(-r/l_r)
//! ```
//!
//! and its gradient at displacement d is `U'(|d|) d/|d|`, defined as zero at
//! d = 0. Because every spatial node pair differs by an integer multiple of
//! (h_x, h_y), all gradient values needed by the convolution live on a
//! (2 n_x - 1) x (2 n_y - 1) table of displacement offsets; the force field
//! is a direct sum over that table,
//!
//! ```text
//! g(x_ij) = sum_kl gradU(x_ij - x_kl) rho_kl h_x h_y .
//! ```
//!
//! The direct O((n_x n_y)^2) sum is exact (no cutoff) and cheap next to the
//! 4D transport work.

use ndarray::Array2;
use rayon::prelude::*;

use crate::field::DensityField;
use crate::grid::PhaseGrid;
use crate::params::ModelParams;

/// Potential value `U(r)` at pair distance `r >= 0`.
pub fn morse(r: f64, params: &ModelParams) -> f64 {
    -params.c_a * (-r / params.l_a).exp() + params.c_r * (-r / params.l_r).exp()
}

/// Radial derivative `U'(r)`.
pub fn morse_deriv(r: f64, params: &ModelParams) -> f64 {
    params.c_a / params.l_a * (-r / params.l_a).exp()
        - params.c_r / params.l_r * (-r / params.l_r).exp()
}

/// Gradient of `U` at displacement `d`; zero at the origin.
pub fn morse_grad(d: [f64; 2], params: &ModelParams) -> [f64; 2] {
    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let s = morse_deriv(r, params) / r;
    [s * d[0], s * d[1]]
}

/// Precomputed `grad U` at every node-to-node displacement of a grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    /// Gradient samples, shape `(2 n_x - 1, 2 n_y - 1)`; entry `(p, q)`
    /// holds `grad U((p - (n_x - 1)) h_x, (q - (n_y - 1)) h_y)`.
    pub values: Array2<[f64; 2]>,
    n_x: usize,
    n_y: usize,
}

impl KernelTable {
    /// Tabulate the gradient kernel for `grid`'s spatial axes.
    pub fn new(grid: &PhaseGrid, params: &ModelParams) -> Self {
        let (n_x, n_y) = (grid.x.n, grid.y.n);
        let mut values = Array2::from_elem((2 * n_x - 1, 2 * n_y - 1), [0.0f64; 2]);
        for p in 0..2 * n_x - 1 {
            for q in 0..2 * n_y - 1 {
                let d = [
                    (p as isize - (n_x as isize - 1)) as f64 * grid.x.h,
                    (q as isize - (n_y as isize - 1)) as f64 * grid.y.h,
                ];
                values[[p, q]] = morse_grad(d, params);
            }
        }
        KernelTable { values, n_x, n_y }
    }

    /// Kernel value at offset `(di, dj)` with `|di| < n_x`, `|dj| < n_y`.
    pub fn at(&self, di: isize, dj: isize) -> [f64; 2] {
        self.values[[(di + self.n_x as isize - 1) as usize, (dj + self.n_y as isize - 1) as usize]]
    }

    /// Mean-field force `g = grad U * rho` on the spatial nodes.
    ///
    /// Inner sums run in a fixed (k, l) order per output node, so the result
    /// is independent of the thread count.
    pub fn convolve(&self, rho: &DensityField) -> ForceField {
        let (n_x, n_y) = (self.n_x, self.n_y);
        assert_eq!(rho.values.dim(), (n_x, n_y), "density grid does not match kernel table");
        let weight = rho.grid.space_weight();
        let rho_flat = rho.values.as_slice().expect("density storage is contiguous");
        let kernel = &self.values;
        let mut out = Array2::from_elem((n_x, n_y), [0.0f64; 2]);
        out.as_slice_mut()
            .expect("force storage is contiguous")
            .par_iter_mut()
            .enumerate()
            .for_each(|(node, g)| {
                let (i, j) = (node / n_y, node % n_y);
                let mut acc = [0.0f64; 2];
                for k in 0..n_x {
                    // Offset row for di = i - k, shifted into table indexing.
                    let p = i + (n_x - 1) - k;
                    for l in 0..n_y {
                        let q = j + (n_y - 1) - l;
                        let kv = kernel[[p, q]];
                        let r = rho_flat[k * n_y + l];
                        acc[0] += kv[0] * r;
                        acc[1] += kv[1] * r;
                    }
                }
                *g = [acc[0] * weight, acc[1] * weight];
            });
        ForceField { values: out }
    }
}

/// Scalar potential table `U` at every node-to-node displacement, used by
/// the noise-dominated stationary-density iteration.
pub fn scalar_kernel_table(grid: &PhaseGrid, params: &ModelParams) -> Array2<f64> {
    let (n_x, n_y) = (grid.x.n, grid.y.n);
    let mut values = Array2::zeros((2 * n_x - 1, 2 * n_y - 1));
    for p in 0..2 * n_x - 1 {
        for q in 0..2 * n_y - 1 {
            let dx = (p as isize - (n_x as isize - 1)) as f64 * grid.x.h;
            let dy = (q as isize - (n_y as isize - 1)) as f64 * grid.y.h;
            values[[p, q]] = morse(dx.hypot(dy), params);
        }
    }
    values
}

/// Scalar convolution `(U * rho)(x_ij)` over the spatial nodes.
pub fn convolve_scalar(kernel: &Array2<f64>, rho: &DensityField) -> Array2<f64> {
    let (n_x, n_y) = rho.values.dim();
    assert_eq!(kernel.dim(), (2 * n_x - 1, 2 * n_y - 1), "kernel does not match density grid");
    let weight = rho.grid.space_weight();
    let rho_flat = rho.values.as_slice().expect("density storage is contiguous");
    let mut out = Array2::zeros((n_x, n_y));
    out.as_slice_mut()
        .expect("output storage is contiguous")
        .par_iter_mut()
        .enumerate()
        .for_each(|(node, o)| {
            let (i, j) = (node / n_y, node % n_y);
            let mut acc = 0.0;
            for k in 0..n_x {
                let p = i + (n_x - 1) - k;
                for l in 0..n_y {
                    let q = j + (n_y - 1) - l;
                    acc += kernel[[p, q]] * rho_flat[k * n_y + l];
                }
            }
            *o = acc * weight;
        });
    out
}

/// Interaction force samples on the spatial nodes.
#[derive(Debug, Clone)]
pub struct ForceField {
    /// Force vectors, shape `(n_x, n_y)`.
    pub values: Array2<[f64; 2]>,
}

impl ForceField {
    /// Zero force field of the given spatial shape.
    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        ForceField { values: Array2::from_elem((n_x, n_y), [0.0f64; 2]) }
    }

    /// Largest absolute component per axis, `(max |g_x|, max |g_y|)`.
    pub fn max_abs(&self) -> [f64; 2] {
        let mut m = [0.0f64; 2];
        for g in self.values.iter() {
            m[0] = m[0].max(g[0].abs());
            m[1] = m[1].max(g[1].abs());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DistributionField;
    use crate::grid::Bounds;

    #[test]
    fn morse_closed_form_values() {
        let p = ModelParams::reference();
        // r = 0: -C_a + C_r.
        assert_eq!(morse(0.0, &p), 30.0);
        // r = 2: direct evaluation of the closed form,
        // -20 exp(-0.02) + 50 exp(-1), frozen to 30 bits.
        let expected = -20.0 * (-2.0f64 / 100.0).exp() + 50.0 * (-1.0f64).exp();
        assert!((morse(2.0, &p) - expected).abs() < 1e-14);
        assert!((expected - (-1.21000140756299)).abs() < 1e-12);
        // Derivative at r = 2 backs the two-particle force magnitude.
        let d_expected = 0.2 * (-0.02f64).exp() - 25.0 * (-1.0f64).exp();
        assert!((morse_deriv(2.0, &p) - d_expected).abs() < 1e-14);
        assert!((d_expected.abs() / 2.0 - 4.50047314731235).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_radial_and_zero_at_origin() {
        let p = ModelParams::reference();
        assert_eq!(morse_grad([0.0, 0.0], &p), [0.0, 0.0]);
        let g = morse_grad([3.0, 4.0], &p);
        let expected = morse_deriv(5.0, &p);
        assert!((g[0] - expected * 0.6).abs() < 1e-14);
        assert!((g[1] - expected * 0.8).abs() < 1e-14);
    }

    #[test]
    fn kernel_table_is_antisymmetric() {
        let grid = PhaseGrid::new(Bounds::symmetric(50.0, 3.0), [9, 7, 4, 4]).unwrap();
        let p = ModelParams::reference();
        let table = KernelTable::new(&grid, &p);
        for di in -8..=8isize {
            for dj in -6..=6isize {
                let a = table.at(di, dj);
                let b = table.at(-di, -dj);
                assert!(
                    (a[0] + b[0]).abs() < 1e-15 && (a[1] + b[1]).abs() < 1e-15,
                    "kernel not antisymmetric at ({di},{dj})"
                );
            }
        }
        assert_eq!(table.at(0, 0), [0.0, 0.0]);
    }

    #[test]
    fn convolution_matches_direct_sum_and_single_source() {
        let grid = PhaseGrid::new(Bounds::symmetric(20.0, 3.0), [8, 8, 4, 4]).unwrap();
        let p = ModelParams::reference();
        let table = KernelTable::new(&grid, &p);

        // A density concentrated at one node: the force at every other node
        // is gradU of the displacement to that node, scaled by the mass.
        let f = DistributionField::zeros(grid);
        let mut rho = f.marginal_density();
        rho.values[[3, 5]] = 2.0;
        let g = table.convolve(&rho);
        let w = grid.space_weight();
        for i in 0..8 {
            for j in 0..8 {
                let d = [
                    grid.x.pos(i) - grid.x.pos(3),
                    grid.y.pos(j) - grid.y.pos(5),
                ];
                let expected = morse_grad(d, &p);
                let got = g.values[[i, j]];
                assert!(
                    (got[0] - 2.0 * w * expected[0]).abs() < 1e-12
                        && (got[1] - 2.0 * w * expected[1]).abs() < 1e-12,
                    "node ({i},{j}): {got:?} vs {expected:?}"
                );
            }
        }
    }

    #[test]
    fn uniform_density_on_symmetric_grid_gives_zero_center_force() {
        let grid = PhaseGrid::new(Bounds::symmetric(20.0, 3.0), [9, 9, 4, 4]).unwrap();
        let p = ModelParams::reference();
        let table = KernelTable::new(&grid, &p);
        let mut rho = DistributionField::zeros(grid).marginal_density();
        rho.values.fill(1.0);
        let g = table.convolve(&rho);
        // Center node sees a balanced pull from all sides.
        let c = g.values[[4, 4]];
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12, "center force {c:?}");
    }

    #[test]
    fn scalar_convolution_single_source() {
        let grid = PhaseGrid::new(Bounds::symmetric(20.0, 3.0), [7, 7, 4, 4]).unwrap();
        let p = ModelParams::reference();
        let kernel = scalar_kernel_table(&grid, &p);
        let mut rho = DistributionField::zeros(grid).marginal_density();
        rho.values[[2, 4]] = 1.5;
        let u = convolve_scalar(&kernel, &rho);
        let w = grid.space_weight();
        for i in 0..7 {
            for j in 0..7 {
                let dx = grid.x.pos(i) - grid.x.pos(2);
                let dy = grid.y.pos(j) - grid.y.pos(4);
                let expected = 1.5 * w * morse(dx.hypot(dy), &p);
                assert!((u[[i, j]] - expected).abs() < 1e-12);
            }
        }
    }
}
