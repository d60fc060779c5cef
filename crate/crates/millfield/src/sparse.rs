//! Minimal CSR sparse matrix and a deterministic conjugate-gradient solver.
//!
//! The implicit diffusion system of the velocity step is symmetric
//! positive definite and strictly diagonally dominant, so plain CG with a
//! relative-residual stop is enough. All inner products run sequentially in
//! index order: given the same inputs the iteration is reproducible bit for
//! bit regardless of thread count.

use crate::error::{Error, Result};

/// Compressed sparse row matrix, square.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    /// Row count (= column count).
    pub n: usize,
    /// Row start offsets, length n + 1.
    pub row_ptr: Vec<usize>,
    /// Column indices, ascending within each row.
    pub cols: Vec<u32>,
    /// Nonzero values, parallel to `cols`.
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (column, value) lists; columns must be strictly
    /// ascending within each row.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0), "columns must ascend");
            for &(c, v) in row {
                cols.push(c as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx] as usize];
            }
            y[r] = acc;
        }
    }

    /// Entry (r, c), zero when absent from the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.cols[idx] as usize == c {
                return self.vals[idx];
            }
        }
        0.0
    }

    /// Sum of the entries of row `r`.
    pub fn row_sum(&self, r: usize) -> f64 {
        self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum()
    }

    /// Largest |A[r][c] - A[c][r]| over the pattern; 0 for symmetric
    /// matrices. Test and audit helper.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[idx] as usize;
                worst = worst.max((self.vals[idx] - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Strict diagonal dominance margin: min over rows of
    /// |diag| - sum |offdiag|. Positive for strictly dominant matrices.
    pub fn dominance_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for r in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[idx] as usize == r {
                    diag = self.vals[idx].abs();
                } else {
                    off += self.vals[idx].abs();
                }
            }
            margin = margin.min(diag - off);
        }
        margin
    }
}

/// Workspace for [`cg_solve`]; reusable across solves of the same size.
#[derive(Debug, Default)]
pub struct CgWorkspace {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgWorkspace {
    fn ensure(&mut self, n: usize) {
        if self.r.len() != n {
            self.r.resize(n, 0.0);
            self.p.resize(n, 0.0);
            self.ap.resize(n, 0.0);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` by conjugate gradients for symmetric positive definite
/// `A`. `x` carries the initial guess on entry and the solution on exit.
/// Stops when `||r||_2 <= tol * ||b||_2`; errors if `max_iter` iterations
/// do not get there.
pub fn cg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    ws: &mut CgWorkspace,
) -> Result<usize> {
    let n = a.n;
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(x.len(), n);
    ws.ensure(n);

    let b_norm2 = dot(b, b);
    if b_norm2 == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let threshold2 = tol * tol * b_norm2;

    a.matvec(x, &mut ws.ap);
    for i in 0..n {
        ws.r[i] = b[i] - ws.ap[i];
        ws.p[i] = ws.r[i];
    }
    let mut rr = dot(&ws.r, &ws.r);
    if rr <= threshold2 {
        return Ok(0);
    }

    for iter in 1..=max_iter {
        a.matvec(&ws.p, &mut ws.ap);
        let pap = dot(&ws.p, &ws.ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                solver: "cg",
                residual: (rr / b_norm2).sqrt(),
                iterations: iter,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * ws.p[i];
            ws.r[i] -= alpha * ws.ap[i];
        }
        let rr_new = dot(&ws.r, &ws.r);
        if rr_new <= threshold2 {
            return Ok(iter);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            ws.p[i] = ws.r[i] + beta * ws.p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "cg",
        residual: (rr / b_norm2).sqrt(),
        iterations: max_iter,
    })
}
