//! Command-line driver: every experiment is a subcommand consuming a flat
//! key-value config, and every output is a text dump or CSV stamped with
//! the config hash, so a (config, seed) pair reproduces its outputs byte
//! for byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use millfield::analysis::{
    equilibrium_ring_speed, fit_order, homogeneous_equilibrium, l2_density_error,
    large_a_density, marginal_peaks, mill_distance, nearest_space_node, radial_profile,
    run_homogeneous, slice_l2_distance, slice_peak_speed, velocity_marginals,
};
use millfield::config::RunConfig;
use millfield::driver::{initial_condition, noise_sweep, run_to_stationary, IcKind, RunOutcome};
use millfield::error::{Error, Result};
use millfield::field::DensityField;
use millfield::fvm::cfl_tau;
use millfield::grid::{Bounds, PhaseGrid};
use millfield::io::{
    create_csv, dump_density, dump_field, dump_particles, load_field, write_row,
};
use millfield::particles::{histogram, pairwise_force, sample_ic, ParticleSim};

#[derive(Parser)]
#[command(name = "millfield", version, about = "Kinetic swarming solver and diagnostics")]
struct Cli {
    /// Worker thread count (overrides MILLFIELD_THREADS; default all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March the kinetic equation toward stationarity.
    Kinetic {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate the interacting-particle system and bin a histogram.
    Particles {
        #[arg(long)]
        config: PathBuf,
        /// Also write a random subsample of this many particles for plotting.
        #[arg(long)]
        plot_sample: Option<usize>,
    },
    /// Velocity-only solver vs the analytic equilibrium.
    Homogeneous {
        /// Config supplying noise, grid and ladder; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Noise strength A.
        #[arg(long)]
        a: Option<f64>,
        /// Velocity cells per axis; with a config, its ladder runs instead.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        v_half: Option<f64>,
        #[arg(long)]
        cfl: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Solve the strong-noise fixed point rho = C exp(-U*rho - phi).
    FixedPoint {
        #[arg(long)]
        config: PathBuf,
    },
    /// Grid-ladder convergence study; emits an n,h,error CSV.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every (noise, initial condition) combination of the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated noise strengths overriding the config list.
        #[arg(long)]
        a: Option<String>,
        /// Comma-separated ICs (single_mill, double_mill) overriding the config.
        #[arg(long)]
        ic: Option<String>,
    },
    /// Mill distance, radial profile and probe slices of a field dump.
    Diagnose {
        #[arg(long)]
        dump: PathBuf,
        /// Config supplying model constants and probes (default: reference).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the CSV outputs (default: next to the dump).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads.or_else(|| {
        std::env::var("MILLFIELD_THREADS").ok().and_then(|v| v.parse().ok())
    }) {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
        {
            eprintln!("error: could not set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    let run = match cli.command {
        Command::Kinetic { config } => cmd_kinetic(&config),
        Command::Particles { config, plot_sample } => cmd_particles(&config, plot_sample),
        Command::Homogeneous { config, a, n, v_half, cfl, tol, t_max } => {
            cmd_homogeneous(config.as_deref(), a, n, v_half, cfl, tol, t_max)
        }
        Command::FixedPoint { config } => cmd_fixed_point(&config),
        Command::Convergence { config } => cmd_convergence(&config),
        Command::Sweep { config, a, ic } => cmd_sweep(&config, a.as_deref(), ic.as_deref()),
        Command::Diagnose { dump, config, out } => {
            cmd_diagnose(&dump, config.as_deref(), out.as_deref())
        }
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(())
}

fn write_history(cfg: &RunConfig, out: &RunOutcome, path: &Path) -> Result<()> {
    let mut csv = create_csv(path, cfg.hash, "t,step,mass,change_rate,mill_distance")?;
    for s in &out.history {
        write_row(
            &mut csv,
            &[s.t, s.step as f64, s.mass, s.change_rate, s.mill_distance],
        )?;
    }
    Ok(())
}

fn cmd_kinetic(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    prepare_output(&cfg)?;
    let grid = cfg.grid()?;
    let field = initial_condition(cfg.ic, &grid, &cfg.params)?;
    let out = run_to_stationary(field, &cfg.params, &cfg.run_options())?;
    let mill = mill_distance(&out.field, &cfg.params, cfg.eps_supp);
    dump_field(&out.field, &cfg.output_dir.join("field.dump"), cfg.hash)?;
    dump_density(
        &out.field.marginal_density(),
        &cfg.output_dir.join("density.dump"),
        cfg.hash,
    )?;
    write_history(&cfg, &out, &cfg.output_dir.join("history.csv"))?;
    println!(
        "{} A={} n={}: t={:.1} steps={} stationary={} mill_distance={:.5}",
        cfg.ic.name(),
        cfg.params.noise_a,
        cfg.n_space,
        out.t,
        out.steps,
        out.converged,
        mill
    );
    Ok(())
}

fn cmd_particles(config: &Path, plot_sample: Option<usize>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    prepare_output(&cfg)?;
    let grid = cfg.grid()?;
    let state = sample_ic(cfg.ic, cfg.n_particles, &cfg.params, cfg.seed);
    // Same step policy as the kinetic solver: CFL bound from the initial
    // ensemble's interaction force, unless the config pins a step.
    let tau = match cfg.tau_particles {
        Some(tau) => tau,
        None => {
            let g = pairwise_force(&state.x, &cfg.params);
            let mut g_max = [0.0f64; 2];
            let mut roost_max = 0.0f64;
            for (gi, xi) in g.iter().zip(&state.x) {
                g_max = [g_max[0].max(gi[0].abs()), g_max[1].max(gi[1].abs())];
                let r = cfg.params.roost_grad(*xi);
                roost_max = roost_max.max(r[0].hypot(r[1]));
            }
            cfl_tau(&grid, &cfg.params, g_max, roost_max, cfg.cfl, cfg.tau_max)
        }
    };
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("degenerate particle step {tau}")));
    }
    let steps = (cfg.t_max / tau).ceil() as usize;
    let mut sim = ParticleSim::new(state, &cfg.params, cfg.seed)?;
    sim.run(tau, steps);
    let hist = histogram(&sim.state, &grid);
    dump_particles(&sim.state, &cfg.output_dir.join("particles.csv"), cfg.hash)?;
    dump_field(&hist.field, &cfg.output_dir.join("histogram.dump"), cfg.hash)?;
    let rho = hist.field.marginal_density();
    dump_density(&rho, &cfg.output_dir.join("density.dump"), cfg.hash)?;
    if let Some(k) = plot_sample {
        let sample = subsample(&sim.state, k, cfg.seed);
        dump_particles(&sample, &cfg.output_dir.join("sample.csv"), cfg.hash)?;
    }
    println!(
        "{} particles to t={:.1} (tau={:.4}): {} outside the grid",
        cfg.n_particles, sim.t, tau, hist.out_of_range
    );
    Ok(())
}

fn subsample(
    state: &millfield::particles::ParticleState,
    k: usize,
    seed: u64,
) -> millfield::particles::ParticleState {
    use rand::seq::SliceRandom as _;
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut idx: Vec<usize> = (0..state.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(k.min(state.len()));
    idx.sort_unstable();
    millfield::particles::ParticleState {
        x: idx.iter().map(|&i| state.x[i]).collect(),
        v: idx.iter().map(|&i| state.v[i]).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_homogeneous(
    config: Option<&Path>,
    a: Option<f64>,
    n: Option<usize>,
    v_half: Option<f64>,
    cfl: Option<f64>,
    tol: Option<f64>,
    t_max: Option<f64>,
) -> Result<()> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut params = cfg.params.clone();
    if let Some(a) = a {
        params.noise_a = a;
    }
    let v_half = v_half.unwrap_or(if config.is_some() { cfg.v_half } else { 3.0 });
    let cfl = cfl.unwrap_or(0.45);
    let tol = tol.unwrap_or(1e-7);
    let t_max = t_max.unwrap_or(2000.0);
    // A single --n runs one size; a config without --n runs its ladder.
    let sizes: Vec<usize> = match (n, config) {
        (Some(n), _) => vec![n],
        (None, Some(_)) => cfg.ladder.clone(),
        (None, None) => {
            return Err(Error::Config("homogeneous needs --n or --config".into()));
        }
    };
    let mut points = Vec::new();
    for n in sizes {
        let grid = PhaseGrid::new(Bounds::symmetric(1.0, v_half), [4, 4, n, n])?;
        let exact = homogeneous_equilibrium(&grid, &params)?;
        let out = run_homogeneous(&grid, &params, cfl, tol, t_max)?;
        let err = slice_l2_distance(&grid, &out.slice, &exact);
        let peak = slice_peak_speed(&grid, &out.slice);
        println!(
            "A={} n={n}: stationary={} t={:.1} steps={} tau={:.5}",
            params.noise_a, out.converged, out.t, out.steps, out.tau
        );
        if let Some(ring) = equilibrium_ring_speed(&params)? {
            println!("  analytic ring speed {ring:.5}, numerical peak |v|={peak:.5}");
        }
        println!("  L2 distance to analytic equilibrium: {err:.6}");
        points.push((grid.u.h, err));
    }
    if points.len() >= 2 {
        println!("fitted order: {:.4}", fit_order(&points));
    }
    Ok(())
}

fn cmd_fixed_point(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    prepare_output(&cfg)?;
    let grid = cfg.grid()?;
    let out = large_a_density(&grid, &cfg.params, 0.5, 1e-12, 500)?;
    dump_density(&out.density, &cfg.output_dir.join("fixed_point.dump"), cfg.hash)?;
    let mut csv = create_csv(&cfg.output_dir.join("residuals.csv"), cfg.hash, "iter,residual")?;
    for (k, r) in out.residuals.iter().enumerate() {
        write_row(&mut csv, &[k as f64, *r])?;
    }
    println!(
        "fixed point on {}^2: {} iterations, final residual {:.3e}",
        cfg.n_space,
        out.residuals.len(),
        out.residuals.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_convergence(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    prepare_output(&cfg)?;
    if cfg.ladder.len() < 2 {
        return Err(Error::Config("convergence needs a ladder of at least 2 sizes".into()));
    }
    let mut ladder = cfg.ladder.clone();
    ladder.sort_unstable();
    let opts = cfg.run_options();

    // Reference: the strong-noise fixed point on a doubled grid when noise
    // is on, otherwise the finest ladder entry marched the same way.
    let (reference, coarse_sizes): (DensityField, Vec<usize>) = if cfg.params.noise_a > 0.0 {
        let n_ref = 2 * ladder.last().unwrap() - 1;
        let fine = PhaseGrid::new(
            Bounds::symmetric(cfg.x_half, cfg.v_half),
            [n_ref, n_ref, cfg.n_vel, cfg.n_vel],
        )?;
        let fp = large_a_density(&fine, &cfg.params, 0.5, 1e-12, 500)?;
        (fp.density, ladder.clone())
    } else {
        let n_ref = *ladder.last().unwrap();
        let coarse = ladder[..ladder.len() - 1].to_vec();
        let grid = PhaseGrid::new(Bounds::symmetric(cfg.x_half, cfg.v_half), [n_ref; 4])?;
        let field = initial_condition(cfg.ic, &grid, &cfg.params)?;
        let out = run_to_stationary(field, &cfg.params, &opts)?;
        println!(
            "reference n={n_ref}: t={:.1} steps={} stationary={}",
            out.t, out.steps, out.converged
        );
        (out.field.marginal_density(), coarse)
    };

    let mut csv = create_csv(&cfg.output_dir.join("convergence.csv"), cfg.hash, "n,h,error")?;
    let mut points = Vec::new();
    for &n in &coarse_sizes {
        let grid = PhaseGrid::new(Bounds::symmetric(cfg.x_half, cfg.v_half), [n; 4])?;
        let field = initial_condition(cfg.ic, &grid, &cfg.params)?;
        let out = run_to_stationary(field, &cfg.params, &opts)?;
        let err = l2_density_error(&out.field.marginal_density(), &reference)?;
        let h = grid.x.h;
        println!(
            "n={n:3} h={h:.4} error={err:.7} (t={:.1}, stationary={})",
            out.t, out.converged
        );
        write_row(&mut csv, &[n as f64, h, err])?;
        points.push((h, err));
    }
    println!("fitted order: {:.4}", fit_order(&points));
    Ok(())
}

fn parse_ic_list(s: &str) -> Result<Vec<IcKind>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p {
            "single_mill" | "single" => Ok(IcKind::SingleMill),
            "double_mill" | "double" => Ok(IcKind::DoubleMill),
            other => Err(Error::Config(format!("unknown ic `{other}`"))),
        })
        .collect()
}

fn cmd_sweep(config: &Path, a_override: Option<&str>, ic_override: Option<&str>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    prepare_output(&cfg)?;
    let noise: Vec<f64> = match a_override {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad noise value `{p}`")))
            })
            .collect::<Result<_>>()?,
        None => cfg.noise_values.clone(),
    };
    let ics = match ic_override {
        Some(list) => parse_ic_list(list)?,
        None => cfg.ics.clone(),
    };
    let grid = cfg.grid()?;
    let opts = cfg.run_options();
    let runs = noise_sweep(&grid, &cfg.params, &noise, &ics, &opts);
    let mut csv = create_csv(
        &cfg.output_dir.join("sweep.csv"),
        cfg.hash,
        "noise_a,ic,mill_distance,t,stationary",
    )?;
    let mut failures = 0usize;
    for run in &runs {
        match &run.result {
            Ok(out) => {
                let mill = mill_distance(&out.field, &with_noise(&cfg, run.noise_a), cfg.eps_supp);
                let tag = format!("a{}_{}", run.noise_a, run.ic.name());
                dump_density(
                    &out.field.marginal_density(),
                    &cfg.output_dir.join(format!("{tag}.density.dump")),
                    cfg.hash,
                )?;
                write_history(&cfg, out, &cfg.output_dir.join(format!("{tag}.history.csv")))?;
                write_sweep_row(&mut csv, run.noise_a, run.ic, mill, out)?;
                println!(
                    "A={:<6} {:<11} mill_distance={:.5} t={:.1} stationary={}",
                    run.noise_a,
                    run.ic.name(),
                    mill,
                    out.t,
                    out.converged
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!("A={} {} failed: {e}", run.noise_a, run.ic.name());
            }
        }
    }
    if failures > 0 {
        return Err(Error::Config(format!("{failures} sweep runs failed")));
    }
    Ok(())
}

fn with_noise(cfg: &RunConfig, a: f64) -> millfield::params::ModelParams {
    let mut p = cfg.params.clone();
    p.noise_a = a;
    p
}

#[allow(non_snake_case)]
fn write_sweep_row(
    csv: &mut impl std::io::Write,
    a: f64,
    ic: IcKind,
    mill: f64,
    out: &RunOutcome,
) -> Result<()> {
    writeln!(
        csv,
        "{a:.16e},{},{mill:.16e},{:.16e},{}",
        ic.name(),
        out.t,
        out.converged
    )?;
    Ok(())
}

fn cmd_diagnose(dump: &Path, config: Option<&Path>, out_dir: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let field = load_field(dump)?;
    let grid = field.grid;
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dump.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out_dir)?;
    let hash = cfg.hash;

    let mill = mill_distance(&field, &cfg.params, cfg.eps_supp);
    println!("mill distance: {mill:.6}");

    let rho = field.marginal_density();
    let profile = radial_profile(&rho, 2.0 * grid.x.h);
    let mut csv = create_csv(&out_dir.join("radial.csv"), hash, "r,mean_density,count")?;
    for bin in profile.iter().filter(|b| b.count > 0) {
        write_row(&mut csv, &[bin.r, bin.mean, bin.count as f64])?;
    }

    let probes = cfg.probes.clone().unwrap_or_else(|| {
        vec![[20.0, 0.0], [0.0, 20.0], [-20.0, 0.0], [0.0, -20.0]]
    });
    let mut csv = create_csv(
        &out_dir.join("probes.csv"),
        hash,
        "probe_x,probe_y,axis,index,center,value",
    )?;
    for target in probes {
        let (i, j) = nearest_space_node(&grid, target);
        let pos = grid.space_pos(i, j);
        let (mu, mw) = velocity_marginals(&field, i, j);
        let peaks_u = marginal_peaks(&mu, 0.1);
        let peaks_w = marginal_peaks(&mw, 0.1);
        println!(
            "probe ({:.1},{:.1}): node ({i},{j}), u-peaks at {:?}, w-peaks at {:?}",
            pos[0],
            pos[1],
            peaks_u.iter().map(|&k| grid.u.center(k)).collect::<Vec<_>>(),
            peaks_w.iter().map(|&l| grid.w.center(l)).collect::<Vec<_>>()
        );
        for (k, v) in mu.iter().enumerate() {
            write_row(&mut csv, &[pos[0], pos[1], 0.0, k as f64, grid.u.center(k), *v])?;
        }
        for (l, v) in mw.iter().enumerate() {
            write_row(&mut csv, &[pos[0], pos[1], 1.0, l as f64, grid.w.center(l), *v])?;
        }
    }
    Ok(())
}
