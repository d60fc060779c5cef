//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or a grid/IC combination that cannot work.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file (config or field dump). Carries a line number
    /// where the problem was found, 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number of the offending line.
        line: usize,
        /// What went wrong.
        message: String,
    },

    /// An iterative solve did not reach its tolerance.
    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        /// Which solver failed ("cg", "fixed-point").
        solver: &'static str,
        /// Last relative residual.
        residual: f64,
        /// Iterations performed.
        iterations: usize,
    },

    /// Mass conservation was violated beyond the per-step budget; the run is
    /// numerically unstable and must not continue.
    #[error("mass drift {drift:.3e} at step {step} exceeds the per-step budget")]
    MassDrift {
        /// Step index at which the check tripped.
        step: usize,
        /// Observed |mass - mass_expected|.
        drift: f64,
    },

    /// A quantity is undefined for the given inputs (e.g. an equilibrium
    /// profile at zero noise, or a diagnostic on an empty field).
    #[error("domain error: {0}")]
    Domain(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
