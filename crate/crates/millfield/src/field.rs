//! Phase-space distribution and spatial density fields.
//!
//! All integrals are midpoint-rule sums with the full per-point weight
//! (`h_x h_y h_u h_w` in 4D, `h_x h_y` in 2D), so a field that is constant
//! on the grid integrates to `constant * n_x h_x * n_y h_y * ...`. Summation
//! orders are fixed (per-spatial-node partials combined in node order) so
//! results are bit-identical regardless of thread count.

use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, s};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;

/// Distribution f(x, y, u, w) sampled at (node, node, cell center, cell
/// center) points, stored row-major with x slowest and w fastest.
#[derive(Debug, Clone)]
pub struct DistributionField {
    /// Sample values, shape `(n_x, n_y, n_u, n_w)`.
    pub values: Array4<f64>,
    /// The grid the samples live on.
    pub grid: PhaseGrid,
}

impl DistributionField {
    /// Zero field on `grid`.
    pub fn zeros(grid: PhaseGrid) -> Self {
        DistributionField {
            values: Array4::zeros((grid.x.n, grid.y.n, grid.u.n, grid.w.n)),
            grid,
        }
    }

    /// Fill from a function of (position, velocity).
    pub fn from_fn(grid: PhaseGrid, f: impl Fn([f64; 2], [f64; 2]) -> f64 + Sync) -> Self {
        let mut field = DistributionField::zeros(grid);
        let n_vel = grid.n_vel();
        let (n_y, n_u, n_w) = (grid.y.n, grid.u.n, grid.w.n);
        field
            .values
            .as_slice_mut()
            .expect("field storage is contiguous")
            .par_chunks_mut(n_vel)
            .enumerate()
            .for_each(|(node, chunk)| {
                let (i, j) = (node / n_y, node % n_y);
                let x = grid.space_pos(i, j);
                for k in 0..n_u {
                    for l in 0..n_w {
                        chunk[k * n_w + l] = f(x, grid.vel_center(k, l));
                    }
                }
            });
        field
    }

    /// Total mass `sum f * h_x h_y h_u h_w`, deterministic for any thread
    /// count: per-spatial-node partial sums are combined in node order.
    pub fn total_mass(&self) -> f64 {
        let n_vel = self.grid.n_vel();
        let partials: Vec<f64> = self
            .values
            .as_slice()
            .expect("field storage is contiguous")
            .par_chunks(n_vel)
            .map(|chunk| chunk.iter().sum::<f64>())
            .collect();
        partials.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// L1 norm `sum |f| * h^4`, same summation discipline as `total_mass`.
    pub fn l1_norm(&self) -> f64 {
        let n_vel = self.grid.n_vel();
        let partials: Vec<f64> = self
            .values
            .as_slice()
            .expect("field storage is contiguous")
            .par_chunks(n_vel)
            .map(|chunk| chunk.iter().map(|v| v.abs()).sum::<f64>())
            .collect();
        partials.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Minimum and maximum sample value.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.values.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Rescale so that `total_mass() == 1`. Errors when the mass is not
    /// positive (nothing to normalize).
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.total_mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("cannot normalize field with mass {m}")));
        }
        let inv = 1.0 / m;
        self.values.mapv_inplace(|v| v * inv);
        Ok(())
    }

    /// Spatial marginal `rho(x) = sum_v f * h_u h_w`.
    pub fn marginal_density(&self) -> DensityField {
        let n_vel = self.grid.n_vel();
        let weight = self.grid.vel_weight();
        let mut rho = Array2::zeros((self.grid.x.n, self.grid.y.n));
        let flat = self.values.as_slice().expect("field storage is contiguous");
        rho.as_slice_mut()
            .expect("density storage is contiguous")
            .par_iter_mut()
            .enumerate()
            .for_each(|(node, out)| {
                let chunk = &flat[node * n_vel..(node + 1) * n_vel];
                *out = chunk.iter().sum::<f64>() * weight;
            });
        DensityField { values: rho, grid: self.grid }
    }

    /// Velocity slice at spatial node `(i, j)`, shape `(n_u, n_w)`.
    pub fn vel_slice(&self, i: usize, j: usize) -> ArrayView2<'_, f64> {
        self.values.slice(s![i, j, .., ..])
    }

    /// Mutable velocity slice at spatial node `(i, j)`.
    pub fn vel_slice_mut(&mut self, i: usize, j: usize) -> ArrayViewMut2<'_, f64> {
        self.values.slice_mut(s![i, j, .., ..])
    }
}

/// Spatial density rho(x, y) on the nodes of a phase grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    /// Sample values, shape `(n_x, n_y)`.
    pub values: Array2<f64>,
    /// Grid whose spatial axes the samples live on.
    pub grid: PhaseGrid,
}

impl DensityField {
    /// Zero density on the spatial axes of `grid`.
    pub fn zeros(grid: PhaseGrid) -> Self {
        DensityField { values: Array2::zeros((grid.x.n, grid.y.n)), grid }
    }

    /// Constant density of unit total mass.
    pub fn uniform(grid: PhaseGrid) -> Result<Self> {
        let volume = (grid.x.n * grid.y.n) as f64 * grid.space_weight();
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::Domain(format!("degenerate spatial volume {volume}")));
        }
        Ok(DensityField {
            values: Array2::from_elem((grid.x.n, grid.y.n), 1.0 / volume),
            grid,
        })
    }

    /// Integral `sum rho * h_x h_y`.
    pub fn total_mass(&self) -> f64 {
        self.values.as_slice().expect("density storage is contiguous").iter().sum::<f64>()
            * self.grid.space_weight()
    }

    /// Largest sample value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}
