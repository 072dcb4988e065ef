//! Flat `key = value` run configuration.
//!
//! Layers, later ones winning: built-in defaults, a config file, environment
//! variables `BECSIM_<KEY>`, and explicit `key=value` overrides. Phases accept
//! a `pi` suffix (`0.9pi`).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::potentials::{effective_g, PhysicalParams, TrapProtocol};
use crate::propagator::StepperConfig;

pub const ENV_PREFIX: &str = "BECSIM_";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    G(f64),
    Physical(PhysicalParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_points: usize,
    pub half_width: f64,
    pub protocol: TrapProtocol,
    pub coupling: Coupling,
    pub dt: f64,
    /// `gamma > 0` switches the noise on.
    pub noise: Option<NoiseSpec>,
    /// Seed used for noise streams even when the noise is off.
    pub seed: u64,
    pub corr_length: f64,
    pub observe_every: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub solver_tol: f64,
    pub thetas: Vec<f64>,
    pub ensemble_size: usize,
    pub gammas: Vec<f64>,
    pub bdg_n_points: usize,
    pub bdg_half_width: f64,
    pub bdg_couplings: Vec<f64>,
    pub bdg_d_min: f64,
    pub bdg_d_max: f64,
    pub bdg_d_tol: f64,
    pub bdg_coarse: usize,
    pub bdg_modes: usize,
    pub two_mode_n_points: usize,
    pub two_mode_table_points: usize,
    pub two_mode_dt: f64,
    /// Atom number and `Omega_perp/Omega` for the coherence limits; also
    /// part of the physical coupling when that is used.
    pub n_atoms: f64,
    pub trap_ratio: f64,
}

const KEYS: &[&str] = &[
    "n_points",
    "half_width",
    "a",
    "tau",
    "theta",
    "theta_over_pi",
    "hold_time",
    "g",
    "n_atoms",
    "scattering_length_ratio",
    "trap_ratio",
    "transverse_ratio",
    "dt",
    "gamma",
    "corr_length",
    "seed",
    "observe_every",
    "snapshot_times",
    "output_dir",
    "solver_tol",
    "thetas",
    "theta_min",
    "theta_max",
    "scan_points",
    "ensemble_size",
    "gammas",
    "bdg_n_points",
    "bdg_half_width",
    "bdg_couplings",
    "bdg_d_min",
    "bdg_d_max",
    "bdg_d_tol",
    "bdg_coarse",
    "bdg_modes",
    "two_mode_n_points",
    "two_mode_table_points",
    "two_mode_dt",
];

fn defaults() -> BTreeMap<String, String> {
    [
        ("n_points", "1024"),
        ("half_width", "20"),
        ("a", "2"),
        ("tau", "70"),
        ("theta", "0.9pi"),
        ("hold_time", "30"),
        ("dt", "1e-3"),
        ("gamma", "0"),
        ("corr_length", "0.5"),
        ("seed", "0"),
        ("observe_every", "0.1"),
        ("snapshot_times", ""),
        ("output_dir", "out"),
        ("solver_tol", "1e-9"),
        ("theta_min", "0.5pi"),
        ("theta_max", "1pi"),
        ("scan_points", "21"),
        ("ensemble_size", "32"),
        ("gammas", "0,1e-4,1e-3,1e-2"),
        ("bdg_n_points", "256"),
        ("bdg_half_width", "12"),
        ("bdg_couplings", "2,5,10"),
        ("bdg_d_min", "0"),
        ("bdg_d_max", "4"),
        ("bdg_d_tol", "0.01"),
        ("bdg_coarse", "9"),
        ("bdg_modes", "6"),
        ("two_mode_n_points", "256"),
        ("two_mode_table_points", "64"),
        ("two_mode_dt", "1e-3"),
        ("n_atoms", "1e4"),
        ("trap_ratio", "10"),
        ("scattering_length_ratio", "0"),
        ("transverse_ratio", "0"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Raw layered key-value settings.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Keys set by a layer above the defaults.
    explicit: BTreeMap<String, String>,
}

impl Settings {
    pub fn new() -> Self {
        Settings {
            values: defaults(),
            explicit: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let value = value.trim().to_string();
        self.values.insert(key.clone(), value.clone());
        self.explicit.insert(key, value);
        Ok(())
    }

    /// `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k, v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains_key(key)
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.get(key)).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.get(key);
        raw.parse::<usize>()
            .or_else(|_| {
                let f = parse_f64(raw)?;
                if f >= 0.0 && f.fract() == 0.0 && f < 1e15 {
                    Ok(f as usize)
                } else {
                    Err(format!("`{raw}` is not a count"))
                }
            })
            .map_err(|e: String| Error::Config(format!("{key}: {e}")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_f64)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    pub fn build(&self) -> Result<RunConfig> {
        let physical_set = self.is_explicit("scattering_length_ratio");
        let coupling = match (self.is_explicit("g"), physical_set) {
            (true, true) => {
                return Err(Error::Config(
                    "set either `g` or the physical parameters, not both".into(),
                ))
            }
            (false, true) => Coupling::Physical(PhysicalParams {
                n_atoms: self.f64("n_atoms")?,
                scattering_length_ratio: self.f64("scattering_length_ratio")?,
                trap_ratio: self.f64("trap_ratio")?,
                transverse_ratio: self.f64("transverse_ratio")?,
            }),
            (true, false) => Coupling::G(self.f64("g")?),
            (false, false) => Coupling::G(10.0),
        };
        let seed = self
            .get("seed")
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("seed: {e}")))?;
        let gamma = self.f64("gamma")?;
        let corr_length = self.f64("corr_length")?;
        let noise = if gamma > 0.0 {
            Some(NoiseSpec::new(gamma, corr_length, seed)?)
        } else if gamma == 0.0 {
            None
        } else {
            return Err(Error::Config(format!("gamma: {gamma} must be >= 0")));
        };
        let theta = match (self.is_explicit("theta"), self.is_explicit("theta_over_pi")) {
            (true, true) => return Err(Error::Config("set either `theta` or `theta_over_pi`, not both".into())),
            (false, true) => self.f64("theta_over_pi")? * PI,
            _ => self.f64("theta")?,
        };
        let observe_every = match self.get("observe_every") {
            "" | "none" | "off" => None,
            _ => Some(self.f64("observe_every")?).filter(|&s| s > 0.0),
        };
        let thetas = if self.get("thetas").is_empty() {
            let (lo, hi) = (self.f64("theta_min")?, self.f64("theta_max")?);
            let n = self.usize("scan_points")?;
            if n < 2 {
                return Err(Error::Config("scan_points must be >= 2".into()));
            }
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        } else {
            self.list("thetas")?
        };
        let cfg = RunConfig {
            n_points: self.usize("n_points")?,
            half_width: self.f64("half_width")?,
            protocol: TrapProtocol::new(
                self.f64("a")?,
                self.f64("tau")?,
                theta,
                self.f64("hold_time")?,
            )?,
            coupling,
            dt: self.f64("dt")?,
            noise,
            seed,
            corr_length,
            observe_every,
            snapshot_times: self.list("snapshot_times")?,
            output_dir: PathBuf::from(self.get("output_dir")),
            solver_tol: self.f64("solver_tol")?,
            thetas,
            ensemble_size: self.usize("ensemble_size")?,
            gammas: self.list("gammas")?,
            bdg_n_points: self.usize("bdg_n_points")?,
            bdg_half_width: self.f64("bdg_half_width")?,
            bdg_couplings: self.list("bdg_couplings")?,
            bdg_d_min: self.f64("bdg_d_min")?,
            bdg_d_max: self.f64("bdg_d_max")?,
            bdg_d_tol: self.f64("bdg_d_tol")?,
            bdg_coarse: self.usize("bdg_coarse")?,
            bdg_modes: self.usize("bdg_modes")?,
            two_mode_n_points: self.usize("two_mode_n_points")?,
            two_mode_table_points: self.usize("two_mode_table_points")?,
            two_mode_dt: self.f64("two_mode_dt")?,
            n_atoms: self.f64("n_atoms")?,
            trap_ratio: self.f64("trap_ratio")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Plain float, or a multiple of pi: `pi`, `0.9pi`, `2*pi`.
pub fn parse_f64(raw: &str) -> std::result::Result<f64, String> {
    let s = raw.trim();
    let parsed = match s.strip_suffix("pi") {
        Some("") => Ok(PI),
        Some("-") => Ok(-PI),
        Some(m) => m.trim().trim_end_matches('*').parse::<f64>().map(|m| m * PI),
        None => s.parse::<f64>(),
    };
    parsed.map_err(|_| format!("`{raw}` is not a number"))
}

impl Default for RunConfig {
    fn default() -> Self {
        Settings::new().build().expect("built-in defaults are valid")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        StepperConfig::real(self.dt).validate()?;
        if self.n_points < 8 || self.n_points % 2 != 0 {
            return Err(Error::Config(format!("n_points = {} must be even and >= 8", self.n_points)));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::Config("half_width must be > 0".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be > 0".into()));
        }
        if let Coupling::G(g) = self.coupling {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("g = {g} must be >= 0")));
            }
        }
        self.g()?;
        Ok(())
    }

    pub fn g(&self) -> Result<f64> {
        match self.coupling {
            Coupling::G(g) => Ok(g),
            Coupling::Physical(p) => effective_g(&p),
        }
    }

    pub fn with_theta(&self, theta: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        c.protocol = TrapProtocol::new(self.protocol.a, self.protocol.tau, theta, self.protocol.hold_time)?;
        Ok(c)
    }

    pub fn with_g(&self, g: f64) -> RunConfig {
        let mut c = self.clone();
        c.coupling = Coupling::G(g);
        c
    }

    pub fn with_noise(&self, gamma: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        c.noise = if gamma > 0.0 {
            Some(NoiseSpec::new(gamma, self.corr_length, self.seed)?)
        } else {
            None
        };
        Ok(c)
    }

    /// Canonical text of every setting that influences results.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        let f = |x: f64| format!("{x:.16e}");
        let list = |xs: &[f64]| xs.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        kv("n_points", self.n_points.to_string());
        kv("half_width", f(self.half_width));
        kv("a", f(self.protocol.a));
        kv("tau", f(self.protocol.tau));
        kv("theta", f(self.protocol.theta));
        kv("hold_time", f(self.protocol.hold_time));
        match self.coupling {
            Coupling::G(g) => kv("g", f(g)),
            Coupling::Physical(p) => {
                kv("n_atoms", f(p.n_atoms));
                kv("scattering_length_ratio", f(p.scattering_length_ratio));
                kv("trap_ratio", f(p.trap_ratio));
                kv("transverse_ratio", f(p.transverse_ratio));
            }
        }
        kv("dt", f(self.dt));
        kv("gamma", f(self.noise.map_or(0.0, |n| n.gamma)));
        kv("corr_length", f(self.corr_length));
        kv("seed", self.seed.to_string());
        kv("observe_every", self.observe_every.map_or("none".into(), f));
        kv("snapshot_times", list(&self.snapshot_times));
        kv("solver_tol", f(self.solver_tol));
        kv("thetas", list(&self.thetas));
        kv("ensemble_size", self.ensemble_size.to_string());
        kv("gammas", list(&self.gammas));
        kv("bdg_n_points", self.bdg_n_points.to_string());
        kv("bdg_half_width", f(self.bdg_half_width));
        kv("bdg_couplings", list(&self.bdg_couplings));
        kv("bdg_d_range", format!("{},{}", f(self.bdg_d_min), f(self.bdg_d_max)));
        kv("bdg_d_tol", f(self.bdg_d_tol));
        kv("bdg_coarse", self.bdg_coarse.to_string());
        kv("bdg_modes", self.bdg_modes.to_string());
        kv("two_mode_n_points", self.two_mode_n_points.to_string());
        kv("two_mode_table_points", self.two_mode_table_points.to_string());
        kv("two_mode_dt", f(self.two_mode_dt));
        kv("limits", format!("{},{}", f(self.n_atoms), f(self.trap_ratio)));
        out
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
