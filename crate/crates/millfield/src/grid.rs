//! Phase-space grid: tensor product of two spatial node axes and two
//! velocity cell axes.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * Spatial axes are node-based: `n` nodes including both bounds, spacing
//!   `h = (hi - lo)/(n - 1)`. The semi-Lagrangian step interpolates between
//!   nodes, and quadrature assigns each node the full weight `h`.
//! * Velocity axes are cell-based: `n` cells of width `h = (hi - lo)/n`
//!   partition the box, values live at cell centers `lo + (k + 1/2) h`.
//!   Finite-volume fluxes cross the interior cell interfaces; the outer
//!   interfaces carry no flux.
//! * Storage order is row-major with x slowest and w fastest:
//!   `(i, j, k, l)` indexes `(x, y, u, w)`.

use crate::error::{Error, Result};

/// Minimum point/cell count per axis; interpolation stencils and flux
/// limiters need four values along every axis.
pub const MIN_AXIS_COUNT: usize = 4;

/// One node-based axis (spatial).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAxis {
    /// Lower bound (position of node 0).
    pub lo: f64,
    /// Upper bound (position of node n-1).
    pub hi: f64,
    /// Node count.
    pub n: usize,
    /// Node spacing `(hi - lo)/(n - 1)`.
    pub h: f64,
}

impl NodeAxis {
    fn new(name: &str, lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_axis(name, lo, hi, n)?;
        Ok(NodeAxis { lo, hi, n, h: (hi - lo) / (n as f64 - 1.0) })
    }

    /// Position of node `i`.
    pub fn pos(&self, i: usize) -> f64 {
        self.lo + self.h * i as f64
    }
}

/// One cell-based axis (velocity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAxis {
    /// Lower bound of the box.
    pub lo: f64,
    /// Upper bound of the box.
    pub hi: f64,
    /// Cell count.
    pub n: usize,
    /// Cell width `(hi - lo)/n`.
    pub h: f64,
}

impl CellAxis {
    fn new(name: &str, lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_axis(name, lo, hi, n)?;
        Ok(CellAxis { lo, hi, n, h: (hi - lo) / n as f64 })
    }

    /// Center of cell `k`.
    pub fn center(&self, k: usize) -> f64 {
        self.lo + self.h * (k as f64 + 0.5)
    }

    /// Interface position between cells `k-1` and `k` (0..=n).
    pub fn interface(&self, k: usize) -> f64 {
        self.lo + self.h * k as f64
    }
}

fn check_axis(name: &str, lo: f64, hi: f64, n: usize) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
        return Err(Error::Config(format!("{name} bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    if n < MIN_AXIS_COUNT {
        return Err(Error::Config(format!("{name} count must be >= {MIN_AXIS_COUNT}, got {n}")));
    }
    Ok(())
}

/// Rectangular bounds of the phase-space box, `[x_lo, x_hi] x [y_lo, y_hi]`
/// in space and `[u_lo, u_hi] x [w_lo, w_hi]` in velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub u: [f64; 2],
    pub w: [f64; 2],
}

impl Bounds {
    /// Square boxes `[-x_half, x_half]^2` and `[-v_half, v_half]^2`.
    pub fn symmetric(x_half: f64, v_half: f64) -> Self {
        Bounds {
            x: [-x_half, x_half],
            y: [-x_half, x_half],
            u: [-v_half, v_half],
            w: [-v_half, v_half],
        }
    }
}

/// The full 4D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    /// Spatial x axis (nodes).
    pub x: NodeAxis,
    /// Spatial y axis (nodes).
    pub y: NodeAxis,
    /// Velocity u axis (cells).
    pub u: CellAxis,
    /// Velocity w axis (cells).
    pub w: CellAxis,
}

impl PhaseGrid {
    /// Build a grid from bounds and per-axis counts `(n_x, n_y, n_u, n_w)`.
    pub fn new(bounds: Bounds, counts: [usize; 4]) -> Result<Self> {
        Ok(PhaseGrid {
            x: NodeAxis::new("x", bounds.x[0], bounds.x[1], counts[0])?,
            y: NodeAxis::new("y", bounds.y[0], bounds.y[1], counts[1])?,
            u: CellAxis::new("u", bounds.u[0], bounds.u[1], counts[2])?,
            w: CellAxis::new("w", bounds.w[0], bounds.w[1], counts[3])?,
        })
    }

    /// Number of spatial nodes `n_x * n_y`.
    pub fn n_space(&self) -> usize {
        self.x.n * self.y.n
    }

    /// Number of velocity cells `n_u * n_w`.
    pub fn n_vel(&self) -> usize {
        self.u.n * self.w.n
    }

    /// 4D quadrature weight of one grid point, `h_x h_y h_u h_w`.
    pub fn cell_volume(&self) -> f64 {
        self.x.h * self.y.h * self.u.h * self.w.h
    }

    /// Spatial quadrature weight `h_x h_y`.
    pub fn space_weight(&self) -> f64 {
        self.x.h * self.y.h
    }

    /// Velocity quadrature weight `h_u h_w`.
    pub fn vel_weight(&self) -> f64 {
        self.u.h * self.w.h
    }

    /// Position of spatial node `(i, j)`.
    pub fn space_pos(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x.pos(i), self.y.pos(j)]
    }

    /// Center of velocity cell `(k, l)`.
    pub fn vel_center(&self, k: usize, l: usize) -> [f64; 2] {
        [self.u.center(k), self.w.center(l)]
    }
}
