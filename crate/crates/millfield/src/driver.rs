//! Strang-split time stepping of the full kinetic equation, initial
//! conditions, and the stationary-run loop.
//!
//! One step advances the distribution by
//!
//! 1. half a velocity step (drift and diffusion scaled by 1/2, full `tau`),
//! 2. one semi-Lagrangian spatial step,
//! 3. another half velocity step,
//!
//! with the interaction force recomputed from the current spatial density
//! before each velocity substep. The time step follows the CFL bound and
//! only ever shrinks during a run, so the implicit diffusion system is
//! rebuilt rarely. Every step is audited for mass conservation.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;
use rayon::prelude::*;

use crate::analysis::mill_distance;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::fvm::{
    assemble_diffusion, assemble_transport, cfl_tau, diffusivity, implicit_system,
    velocity_halfstep, CgParams, HalfstepScratch, NodeDrift,
};
use crate::grid::PhaseGrid;
use crate::params::ModelParams;
use crate::potential::{ForceField, KernelTable};
use crate::semilag::{advect_step, AdvectWorkspace};
use crate::sparse::CsrMatrix;

/// Inner radius of the ring initial data.
pub const IC_R_INNER: f64 = 12.0;
/// Outer radius of the ring initial data.
pub const IC_R_OUTER: f64 = 29.0;
/// Half-width of the speed band around the cruise speed (single mill).
pub const IC_SPEED_BAND: f64 = 0.5;
/// Maximum distance between the unit velocity and the unit tangent
/// (single mill).
pub const IC_DIRECTION_TOL: f64 = 0.15;
/// Speed cap of the double-mill initial data.
pub const IC_DOUBLE_SPEED: f64 = 1.6;

/// Which initial condition a run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    /// Counterclockwise ring: annulus in space, tangential cruise band in
    /// velocity.
    SingleMill,
    /// Orientation-free ring: annulus in space, full speed disk in velocity.
    DoubleMill,
}

impl IcKind {
    /// Stable name used in configs and output files.
    pub fn name(self) -> &'static str {
        match self {
            IcKind::SingleMill => "single_mill",
            IcKind::DoubleMill => "double_mill",
        }
    }
}

fn check_ic_box(grid: &PhaseGrid, v_needed: f64) -> Result<()> {
    let spans = grid.x.lo <= -IC_R_OUTER
        && grid.x.hi >= IC_R_OUTER
        && grid.y.lo <= -IC_R_OUTER
        && grid.y.hi >= IC_R_OUTER;
    if !spans {
        return Err(Error::Config(format!(
            "spatial box [{}, {}] x [{}, {}] does not contain the ring of radius {IC_R_OUTER}",
            grid.x.lo, grid.x.hi, grid.y.lo, grid.y.hi
        )));
    }
    let holds = grid.u.lo <= -v_needed
        && grid.u.hi >= v_needed
        && grid.w.lo <= -v_needed
        && grid.w.hi >= v_needed;
    if !holds {
        return Err(Error::Config(format!(
            "velocity box [{}, {}] x [{}, {}] does not contain speeds up to {v_needed:.3}",
            grid.u.lo, grid.u.hi, grid.w.lo, grid.w.hi
        )));
    }
    Ok(())
}

/// Single-mill initial condition: uniform on the set
/// `12 <= |x| <= 29`, `|v|` within 1/2 of the cruise speed, and unit
/// velocity within 0.15 of the counterclockwise tangent, normalized to
/// unit mass.
pub fn single_mill_ic(grid: &PhaseGrid, params: &ModelParams) -> Result<DistributionField> {
    let cruise = params.cruise_speed();
    check_ic_box(grid, cruise + IC_SPEED_BAND)?;
    let mut f = DistributionField::from_fn(*grid, |x, v| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if !(IC_R_INNER..=IC_R_OUTER).contains(&r) {
            return 0.0;
        }
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if (speed - cruise).abs() > IC_SPEED_BAND || speed == 0.0 {
            return 0.0;
        }
        let tangent = [-x[1] / r, x[0] / r];
        let du = v[0] / speed - tangent[0];
        let dw = v[1] / speed - tangent[1];
        if (du * du + dw * dw).sqrt() > IC_DIRECTION_TOL {
            return 0.0;
        }
        1.0
    });
    f.normalize().map_err(|_| {
        Error::Config("single-mill support misses every grid point; refine the grid".into())
    })?;
    Ok(f)
}

/// Double-mill initial condition: uniform on `12 <= |x| <= 29` times the
/// speed disk `|v| <= 1.6`, normalized to unit mass. Carries no preferred
/// orientation.
pub fn double_mill_ic(grid: &PhaseGrid, params: &ModelParams) -> Result<DistributionField> {
    let _ = params;
    check_ic_box(grid, IC_DOUBLE_SPEED)?;
    let mut f = DistributionField::from_fn(*grid, |x, v| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let inside = (IC_R_INNER..=IC_R_OUTER).contains(&r)
            && v[0] * v[0] + v[1] * v[1] <= IC_DOUBLE_SPEED * IC_DOUBLE_SPEED;
        if inside {
            1.0
        } else {
            0.0
        }
    });
    f.normalize().map_err(|_| {
        Error::Config("double-mill support misses every grid point; refine the grid".into())
    })?;
    Ok(f)
}

/// Build the initial condition of the given kind.
pub fn initial_condition(
    kind: IcKind,
    grid: &PhaseGrid,
    params: &ModelParams,
) -> Result<DistributionField> {
    match kind {
        IcKind::SingleMill => single_mill_ic(grid, params),
        IcKind::DoubleMill => double_mill_ic(grid, params),
    }
}

/// Per-step diagnostics returned by [`Stepper::step`].
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// Time step actually taken.
    pub tau: f64,
    /// Largest CG iteration count over all spatial nodes (0 without noise).
    pub max_cg_iters: usize,
    /// Total mass after the step.
    pub mass: f64,
}

/// Reusable state for Strang stepping on a fixed grid: interaction kernel,
/// roost gradients, advection scratch, and the implicit diffusion system
/// for the current time step.
pub struct Stepper<'a> {
    params: &'a ModelParams,
    grid: PhaseGrid,
    kernel: KernelTable,
    roost: Array2<[f64; 2]>,
    roost_grad_max: f64,
    cfl: f64,
    tau_max: Option<f64>,
    tau: f64,
    system: Option<CsrMatrix>,
    adv: AdvectWorkspace,
    cg: CgParams,
    /// Relative per-step mass drift that aborts the run.
    pub mass_budget: f64,
}

impl<'a> Stepper<'a> {
    /// Set up stepping for `field`'s grid. The initial time step comes from
    /// the CFL bound with the interaction force of `field` itself.
    pub fn new(
        field: &DistributionField,
        params: &'a ModelParams,
        cfl: f64,
        tau_max: Option<f64>,
    ) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must be in (0, 1], got {cfl}")));
        }
        params.validate()?;
        let grid = field.grid;
        let kernel = KernelTable::new(&grid, params);
        let mut roost = Array2::from_elem((grid.x.n, grid.y.n), [0.0f64; 2]);
        let mut roost_grad_max = 0.0f64;
        for i in 0..grid.x.n {
            for j in 0..grid.y.n {
                let g = params.roost_grad(grid.space_pos(i, j));
                roost_grad_max = roost_grad_max.max(g[0].hypot(g[1]));
                roost[[i, j]] = g;
            }
        }
        let force = kernel.convolve(&field.marginal_density());
        let tau = cfl_tau(&grid, params, force.max_abs(), roost_grad_max, cfl, tau_max);
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("degenerate time step {tau} from the CFL bound")));
        }
        let mut stepper = Stepper {
            params,
            grid,
            kernel,
            roost,
            roost_grad_max,
            cfl,
            tau_max,
            tau,
            system: None,
            adv: AdvectWorkspace::new(&grid),
            cg: CgParams::default(),
            mass_budget: 1e-6,
        };
        stepper.rebuild_system();
        Ok(stepper)
    }

    /// Current time step.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn rebuild_system(&mut self) {
        let d = diffusivity(self.params, 0.5);
        self.system =
            (d > 0.0).then(|| implicit_system(&assemble_diffusion(&self.grid, d), self.tau));
    }

    /// Shrink the time step if the current force demands it; the step never
    /// grows, so runs cannot oscillate between two system matrices.
    fn adapt_tau(&mut self, force: &ForceField) {
        let bound = cfl_tau(
            &self.grid,
            self.params,
            force.max_abs(),
            self.roost_grad_max,
            self.cfl,
            self.tau_max,
        );
        if bound < self.tau {
            self.tau = bound;
            self.rebuild_system();
        }
    }

    /// Half a velocity step over every spatial node: the transport operator
    /// is rebuilt per node from the current slice and the given force,
    /// scaled by 1/2; diffusion is implicit. Returns the largest CG
    /// iteration count.
    fn velocity_substep(&mut self, field: &mut DistributionField, force: &ForceField) -> Result<usize> {
        let grid = self.grid;
        let n_vel = grid.n_vel();
        let tau = self.tau;
        let system = self.system.as_ref();
        let cg = self.cg;
        let params = self.params;
        let force_flat = force.values.as_slice().expect("force storage is contiguous");
        let roost_flat = self.roost.as_slice().expect("roost storage is contiguous");
        let max_iters = AtomicUsize::new(0);
        field
            .values
            .as_slice_mut()
            .expect("field storage is contiguous")
            .par_chunks_mut(n_vel)
            .enumerate()
            .try_for_each_init(HalfstepScratch::default, |scratch, (node, slice)| -> Result<()> {
                let nd = NodeDrift {
                    g: force_flat[node],
                    phi_grad: roost_flat[node],
                    scale: 0.5,
                    params,
                };
                let a_t = assemble_transport(slice, &grid, &nd, tau);
                let iters = velocity_halfstep(slice, &a_t, system, tau, &cg, scratch)?;
                max_iters.fetch_max(iters, Ordering::Relaxed);
                Ok(())
            })?;
        Ok(max_iters.into_inner())
    }

    /// Advance `field` by one Strang step. `step_index` only labels the
    /// mass-drift error.
    pub fn step(&mut self, field: &mut DistributionField, step_index: usize) -> Result<StepReport> {
        let mass_before = field.total_mass();
        let force = self.kernel.convolve(&field.marginal_density());
        self.adapt_tau(&force);
        let tau = self.tau;
        let mut max_cg = self.velocity_substep(field, &force)?;
        advect_step(field, tau, &mut self.adv);
        let force = self.kernel.convolve(&field.marginal_density());
        max_cg = max_cg.max(self.velocity_substep(field, &force)?);
        let mass = field.total_mass();
        let drift = (mass - mass_before).abs();
        if !(drift <= self.mass_budget * mass_before.abs()) {
            return Err(Error::MassDrift { step: step_index, drift });
        }
        Ok(StepReport { tau, max_cg_iters: max_cg, mass })
    }
}

/// Controls for [`run_to_stationary`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Fraction of the CFL bound to use as the time step.
    pub cfl: f64,
    /// Optional hard cap on the time step.
    pub tau_max: Option<f64>,
    /// Stationarity threshold on the relative L1 change per unit time.
    pub tol_stat: f64,
    /// Give up (without error) at this simulated time.
    pub t_max: f64,
    /// Steps between history samples.
    pub history_every: usize,
    /// Support threshold for the mill-distance diagnostic.
    pub eps_supp: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            cfl: 0.9,
            tau_max: None,
            tol_stat: 1e-6,
            t_max: 500.0,
            history_every: 10,
            eps_supp: 1e-3,
        }
    }
}

/// One row of the run history.
#[derive(Debug, Clone, Copy)]
pub struct HistorySample {
    /// Simulated time after the sampled step.
    pub t: f64,
    /// Step count after the sampled step.
    pub step: usize,
    /// Total mass.
    pub mass: f64,
    /// Relative L1 change per unit time over the sampled step.
    pub change_rate: f64,
    /// Mill-distance diagnostic.
    pub mill_distance: f64,
}

/// A finished (or timed-out) stationary run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Final distribution.
    pub field: DistributionField,
    /// Simulated time.
    pub t: f64,
    /// Steps taken.
    pub steps: usize,
    /// Whether the change rate dropped below `tol_stat` before `t_max`.
    pub converged: bool,
    /// Time series of diagnostics, sampled every `history_every` steps.
    pub history: Vec<HistorySample>,
}

/// March `field` until the relative L1 change rate per unit time falls
/// below `opts.tol_stat` or the simulated time exceeds `opts.t_max`.
pub fn run_to_stationary(
    field: DistributionField,
    params: &ModelParams,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let mut field = field;
    let mut stepper = Stepper::new(&field, params, opts.cfl, opts.tau_max)?;
    let mut prev = field.values.clone();
    let mut history = Vec::new();
    let mut t = 0.0;
    let mut steps = 0;
    let mut converged = false;
    let every = opts.history_every.max(1);
    while t < opts.t_max {
        prev.assign(&field.values);
        let report = stepper.step(&mut field, steps)?;
        t += report.tau;
        steps += 1;
        let mut change = 0.0;
        let mut scale = 0.0;
        for (a, b) in field.values.iter().zip(prev.iter()) {
            change += (a - b).abs();
            scale += a.abs();
        }
        let change_rate = change / (report.tau * scale);
        if steps % every == 0 {
            history.push(HistorySample {
                t,
                step: steps,
                mass: report.mass,
                change_rate,
                mill_distance: mill_distance(&field, params, opts.eps_supp),
            });
        }
        if change_rate < opts.tol_stat {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome { field, t, steps, converged, history })
}

/// One entry of a noise sweep.
#[derive(Debug)]
pub struct SweepRun {
    /// Noise strength of this run.
    pub noise_a: f64,
    /// Initial condition of this run.
    pub ic: IcKind,
    /// The run itself; failures are recorded, not propagated.
    pub result: Result<RunOutcome>,
}

/// Run every combination of noise strength and initial condition on one
/// grid. Individual failures are recorded in the returned list so a sweep
/// always reports every cell.
pub fn noise_sweep(
    grid: &PhaseGrid,
    base: &ModelParams,
    noise: &[f64],
    ics: &[IcKind],
    opts: &RunOptions,
) -> Vec<SweepRun> {
    let mut runs = Vec::with_capacity(noise.len() * ics.len());
    for &a in noise {
        for &ic in ics {
            let mut params = *base;
            params.noise_a = a;
            let result = initial_condition(ic, grid, &params)
                .and_then(|f| run_to_stationary(f, &params, opts));
            runs.push(SweepRun { noise_a: a, ic, result });
        }
    }
    runs
}
