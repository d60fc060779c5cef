//! Flat key-value run configuration.
//!
//! One `key = value` per line, `#` starts a comment, unknown keys are
//! errors. A config plus a seed fully determines a run, so outputs stamp
//! the FNV-1a hash of the raw config text for provenance.

use std::path::{Path, PathBuf};

use crate::driver::{IcKind, RunOptions};
use crate::error::{Error, Result};
use crate::grid::{Bounds, PhaseGrid};
use crate::params::{ModelParams, Roosting};

/// Everything a run needs beyond the subcommand itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Half-width of the symmetric spatial box.
    pub x_half: f64,
    /// Half-width of the symmetric velocity box.
    pub v_half: f64,
    /// Nodes per spatial axis.
    pub n_space: usize,
    /// Cells per velocity axis.
    pub n_vel: usize,
    /// Model constants.
    pub params: ModelParams,
    /// Initial condition selector.
    pub ic: IcKind,
    /// CFL fraction for the time step.
    pub cfl: f64,
    /// Optional hard cap on the time step.
    pub tau_max: Option<f64>,
    /// Stationarity threshold (relative L1 change per unit time).
    pub tol_stat: f64,
    /// Simulated-time budget.
    pub t_max: f64,
    /// Steps between history samples.
    pub history_every: usize,
    /// Support threshold for the mill-distance diagnostic.
    pub eps_supp: f64,
    /// RNG seed for particle runs.
    pub seed: u64,
    /// Ensemble size for particle runs.
    pub n_particles: usize,
    /// Explicit particle time step; defaults to the kinetic CFL bound.
    pub tau_particles: Option<f64>,
    /// Spatial probe points for velocity slices; defaults to four axis
    /// nodes near radius 20.
    pub probes: Option<Vec<[f64; 2]>>,
    /// Noise strengths for `sweep`.
    pub noise_values: Vec<f64>,
    /// Initial conditions for `sweep`.
    pub ics: Vec<IcKind>,
    /// Grid ladder for `convergence`.
    pub ladder: Vec<usize>,
    /// Where outputs land.
    pub output_dir: PathBuf,
    /// FNV-1a hash of the raw config text, stamped into outputs.
    pub hash: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = RunOptions::default();
        RunConfig {
            x_half: 50.0,
            v_half: 2.0,
            n_space: 30,
            n_vel: 30,
            params: ModelParams::reference(),
            ic: IcKind::SingleMill,
            cfl: o.cfl,
            tau_max: o.tau_max,
            tol_stat: o.tol_stat,
            t_max: o.t_max,
            history_every: o.history_every,
            eps_supp: o.eps_supp,
            seed: 1,
            n_particles: 13000,
            tau_particles: None,
            probes: None,
            noise_values: vec![0.0],
            ics: vec![IcKind::SingleMill],
            ladder: vec![15, 22, 30, 45],
            output_dir: PathBuf::from("out"),
            hash: fnv1a64(b""),
        }
    }
}

impl RunConfig {
    /// Parse a config from raw text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig { hash: fnv1a64(text.as_bytes()), ..RunConfig::default() };
        let mut roost_b: Option<f64> = None;
        let mut roost_r: Option<f64> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, got `{stripped}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("{what} `{value}` for key `{key}`"),
            };
            let float = || value.parse::<f64>().map_err(|_| bad("bad number"));
            match key {
                "x_half" => cfg.x_half = float()?,
                "v_half" => cfg.v_half = float()?,
                "n_space" => cfg.n_space = parse_count(value).ok_or_else(|| bad("bad count"))?,
                "n_vel" => cfg.n_vel = parse_count(value).ok_or_else(|| bad("bad count"))?,
                "alpha" => cfg.params.alpha = float()?,
                "beta" => cfg.params.beta = float()?,
                "c_a" => cfg.params.c_a = float()?,
                "c_r" => cfg.params.c_r = float()?,
                "l_a" => cfg.params.l_a = float()?,
                "l_r" => cfg.params.l_r = float()?,
                "noise_a" => cfg.params.noise_a = float()?,
                "roosting_b" => roost_b = Some(float()?),
                "roosting_r" => roost_r = Some(float()?),
                "ic" => cfg.ic = parse_ic(value).ok_or_else(|| bad("unknown ic"))?,
                "cfl" => cfg.cfl = float()?,
                "tau_max" => cfg.tau_max = Some(float()?),
                "tol_stat" => cfg.tol_stat = float()?,
                "t_max" => cfg.t_max = float()?,
                "history_every" => {
                    cfg.history_every = parse_count(value).ok_or_else(|| bad("bad count"))?
                }
                "eps_supp" => cfg.eps_supp = float()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("bad seed"))?,
                "n_particles" => {
                    cfg.n_particles = parse_count(value).ok_or_else(|| bad("bad count"))?
                }
                "tau_particles" => cfg.tau_particles = Some(float()?),
                "probes" => cfg.probes = Some(parse_probes(value).ok_or_else(|| bad("bad probes"))?),
                "noise_values" => {
                    cfg.noise_values = parse_list(value, str::parse::<f64>)
                        .ok_or_else(|| bad("bad noise list"))?
                }
                "ics" => {
                    cfg.ics =
                        parse_list(value, |s| parse_ic(s).ok_or(())).ok_or_else(|| bad("bad ic list"))?
                }
                "ladder" => {
                    cfg.ladder = parse_list(value, |s| parse_count(s).ok_or(()))
                        .ok_or_else(|| bad("bad ladder"))?
                }
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                _ => {
                    return Err(Error::Parse { line, message: format!("unknown key `{key}`") });
                }
            }
        }
        match (roost_b, roost_r) {
            (None, None) => {}
            (Some(b), Some(r)) => cfg.params.roosting = Some(Roosting { b, r }),
            _ => {
                return Err(Error::Config(
                    "roosting_b and roosting_r must be given together".into(),
                ));
            }
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// The phase grid this config describes.
    pub fn grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(
            Bounds::symmetric(self.x_half, self.v_half),
            [self.n_space, self.n_space, self.n_vel, self.n_vel],
        )
    }

    /// The solver options this config describes.
    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            cfl: self.cfl,
            tau_max: self.tau_max,
            tol_stat: self.tol_stat,
            t_max: self.t_max,
            history_every: self.history_every,
            eps_supp: self.eps_supp,
        }
    }
}

fn parse_count(s: &str) -> Option<usize> {
    s.parse::<usize>().ok().filter(|&n| n > 0)
}

fn parse_ic(s: &str) -> Option<IcKind> {
    match s {
        "single_mill" => Some(IcKind::SingleMill),
        "double_mill" => Some(IcKind::DoubleMill),
        _ => None,
    }
}

fn parse_list<T, E>(s: &str, item: impl Fn(&str) -> std::result::Result<T, E>) -> Option<Vec<T>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        return None;
    }
    parts.into_iter().map(|p| item(p).ok()).collect()
}

fn parse_probes(s: &str) -> Option<Vec<[f64; 2]>> {
    parse_list(s, |pair| -> std::result::Result<[f64; 2], ()> {
        let mut it = pair.split_whitespace();
        let x = it.next().ok_or(())?.parse().map_err(|_| ())?;
        let y = it.next().ok_or(())?.parse().map_err(|_| ())?;
        if it.next().is_some() {
            return Err(());
        }
        Ok([x, y])
    })
}

/// FNV-1a 64-bit hash, used to stamp outputs with their config.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
# mill run
x_half = 50
v_half = 2.0
n_space = 30
n_vel = 30
noise_a = 0.123   # transitional noise
ic = double_mill
cfl = 0.8
tau_max = 0.05
tol_stat = 1e-7
t_max = 400
seed = 9
n_particles = 500
probes = 20 0, 0 20
noise_values = 0, 0.123, 0.9
ics = single_mill, double_mill
ladder = 15, 22, 30
output_dir = results/mill
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.n_space, 30);
        assert_eq!(cfg.params.noise_a, 0.123);
        assert_eq!(cfg.ic, IcKind::DoubleMill);
        assert_eq!(cfg.tau_max, Some(0.05));
        assert_eq!(cfg.probes.as_deref(), Some(&[[20.0, 0.0], [0.0, 20.0]][..]));
        assert_eq!(cfg.noise_values, vec![0.0, 0.123, 0.9]);
        assert_eq!(cfg.ics, vec![IcKind::SingleMill, IcKind::DoubleMill]);
        assert_eq!(cfg.ladder, vec![15, 22, 30]);
        assert_eq!(cfg.output_dir, PathBuf::from("results/mill"));
        assert_eq!(cfg.hash, fnv1a64(text.as_bytes()));
        let grid = cfg.grid().unwrap();
        assert_eq!((grid.x.n, grid.u.n), (30, 30));
        // Untouched keys keep their defaults.
        assert_eq!(cfg.params.alpha, 0.07);
        assert_eq!(cfg.run_options().history_every, 10);
    }

    #[test]
    fn rejects_unknown_keys_with_the_line_number() {
        let err = RunConfig::parse("x_half = 50\nspeed = 3\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_lines_and_values() {
        assert!(matches!(
            RunConfig::parse("just words\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("alpha = fast\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("n_space = 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("ic = spiral\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn roosting_keys_come_as_a_pair() {
        let cfg = RunConfig::parse("roosting_b = 1.5\nroosting_r = 40\n").unwrap();
        let ro = cfg.params.roosting.unwrap();
        assert_eq!((ro.b, ro.r), (1.5, 40.0));
        assert!(matches!(RunConfig::parse("roosting_b = 1.5\n"), Err(Error::Config(_))));
        assert!(RunConfig::parse("").unwrap().params.roosting.is_none());
    }

    #[test]
    fn invalid_physics_is_rejected_after_parsing() {
        assert!(RunConfig::parse("beta = -1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_text_sensitive() {
        // Frozen reference value so dumps stay comparable across builds.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_ne!(fnv1a64(b"x_half = 50"), fnv1a64(b"x_half = 51"));
    }
}
