//! Deterministic kinetic solver for mean-field swarming with
//! attraction-repulsion, self-propulsion and velocity noise.
//!
//! The crate evolves a phase-space density `f(x, v, t)` on a 4D tensor grid
//! under
//!
//! ```text
//! df/dt + v . grad_x f + div_v( (v (alpha - beta |v|^2) - grad U * rho) f )
//!     = (A^2/2) div_v( v f + grad_v f ) ,
//! ```
//!
//! using Strang splitting: a semi-Lagrangian transport step in space with
//! clamped cubic Bezier interpolation, wrapped between two finite-volume
//! velocity substeps (limited Lax-Wendroff/upwind transport, implicit
//! diffusion). A microscopic particle simulator and the analytic homogeneous
//! and large-noise limits provide independent cross-checks.
//!
//! Highlights:
//! * mill and double-mill states from ring initial data, and the
//!   noise-driven transition between them,
//! * spatially homogeneous equilibria in closed form for validation,
//! * an interacting-particle ensemble with matched parameters,
//! * convergence and sweep drivers with plain-text outputs.
//!
//! See `examples/` for runnable entry points:
//!
//! ```text
//! examples/
//!   mill_formation.rs          single mill from ring initial data
//!   double_mill.rs             counter-rotating double mill at zero noise
//!   noise_transition.rs        mill distance across a noise sweep
//!   particle_mill.rs           microscopic ensemble forming a mill
//!   homogeneous_equilibrium.rs velocity-only solver vs closed form
//!   advection_accuracy.rs      third-order transport convergence
//!   attractor_density.rs       large-noise density vs fixed point
//! ```

pub mod analysis;
pub mod config;
pub mod driver;
pub mod error;
pub mod field;
pub mod fvm;
pub mod grid;
pub mod io;
pub mod params;
pub mod particles;
pub mod potential;
pub mod semilag;
pub mod sparse;

pub use error::{Error, Result};
