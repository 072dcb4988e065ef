//! Orchestration of the interferometer sequence, phase and ensemble scans,
//! stability scans, the coherence-limit estimates, and file output.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bdg::{bdg_spectrum, critical_separation, CriticalSeparation};
use crate::config::RunConfig;
use crate::error::{Error, Result, StageExt};
use crate::grid::{make_grid, Grid, WaveFunction};
use crate::noise::{summarize, EnsembleResult, NoiseSource, NoiseSpec};
use crate::observables::{
    crossing_period, dip_search_radius, fit_sinusoid, gpe_energy, mean_position_recorder, norm_recorder,
    oscillation_amplitude, populations, thomas_fermi_mu, Populations, SeriesRecorder, SolitonTrack, SolitonTracker,
    TimeSeries,
};
use crate::potentials::sample_double_well;
use crate::propagator::{evolve, Drive, EvolveOptions, Frame, Observer, PotentialNoise, StepperConfig};
use crate::stationary::{double_well_state, ground_state, first_excited, Parity, SolverOptions, StationaryState};
use crate::two_mode::{integrate_two_mode, scan_two_mode, ModeTable, TwoModeRun, TwoModeState};

/// Observation stride used by scans when the configuration has none.
pub const SCAN_STRIDE: f64 = 0.1;

/// Ground state of the initial trap plus the analysis basis of the final
/// trap. Both traps are harmonic, so the basis starts with the ground state.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Arc<Grid>,
    pub g: f64,
    pub phi0: StationaryState,
    pub phi1: StationaryState,
    pub trap: Vec<f64>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let g = cfg.g()?;
    let grid = make_grid(cfg.n_points, cfg.half_width)?;
    let trap = sample_double_well(&grid, 0.0);
    info!("ground state: n = {}, L = {}, g = {g}", cfg.n_points, cfg.half_width);
    let phi0 = ground_state(&grid, &trap, g, cfg.solver_tol).stage("ground state")?;
    let phi1 = first_excited(&grid, &trap, g, cfg.solver_tol).stage("analysis basis")?;
    Ok(Prepared {
        grid,
        g,
        phi0,
        phi1,
        trap,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub theta: f64,
    pub g: f64,
    /// Projections at `t = tau`.
    pub populations: Populations,
    pub mean_x: TimeSeries,
    pub p0_series: TimeSeries,
    pub p1_series: TimeSeries,
    pub dipole_amplitude: Option<f64>,
    pub dipole_frequency: Option<f64>,
    pub soliton: SolitonTrack,
    pub soliton_amplitude: Option<f64>,
    pub soliton_period: Option<f64>,
    /// Largest `|norm - 1|` over observations and the final state.
    pub norm_drift: f64,
    /// Largest relative energy deviation during the hold, per unit time.
    pub energy_drift_rate: Option<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub box_confined: bool,
    pub final_state: WaveFunction,
}

struct Snapshots {
    targets: Vec<f64>,
    half_window: f64,
    taken: Vec<(f64, Vec<f64>)>,
}

impl Observer for Snapshots {
    fn observe(&mut self, frame: &Frame<'_>) {
        for &t in &self.targets {
            let near = (frame.t - t).abs() <= self.half_window;
            if near && !self.taken.iter().any(|(s, _)| *s == t) {
                self.taken.push((t, frame.psi.density()));
            }
        }
    }
}

fn noise_source(grid: &Arc<Grid>, noise: Option<&NoiseSpec>, dt: f64, stream: u64) -> Result<Option<NoiseSource>> {
    noise.map(|spec| NoiseSource::new(grid.clone(), spec, dt, stream)).transpose()
}

fn step_config(cfg: &RunConfig) -> StepperConfig {
    StepperConfig::real(cfg.dt)
}

/// Split, imprint and recombine only; populations at `tau`.
pub fn populations_at_tau(prep: &Prepared, cfg: &RunConfig, noise: Option<&NoiseSpec>, stream: u64) -> Result<Populations> {
    let mut src = noise_source(&prep.grid, noise, cfg.dt, stream)?;
    let opts = EvolveOptions {
        noise: src.as_mut().map(|s| s as &mut dyn PotentialNoise),
        ..EvolveOptions::default()
    };
    let p = &cfg.protocol;
    let out = evolve(&prep.phi0.wavefunction, Drive::Protocol(p), prep.g, (0.0, p.tau), &step_config(cfg), opts)
        .stage("protocol")?;
    populations(&out.psi, &prep.phi0, &prep.phi1).stage("analysis")
}

/// The full sequence on a prepared basis. Noise realization `stream` is
/// used when the configuration carries a noise spec.
pub fn run_prepared(prep: &Prepared, cfg: &RunConfig, stride: Option<f64>, stream: u64) -> Result<RunResult> {
    let p = &cfg.protocol;
    let g = prep.g;
    let step = step_config(cfg);
    let mut src = noise_source(&prep.grid, cfg.noise.as_ref(), cfg.dt, stream)?;

    let mut mean = mean_position_recorder();
    let mut norm = norm_recorder();
    let (phi0, phi1) = (&prep.phi0.wavefunction, &prep.phi1.wavefunction);
    let mut p0 = SeriesRecorder::new("p0", |f: &Frame<'_>| {
        crate::grid::inner_product(phi0, f.psi).map_or(f64::NAN, |c| c.norm_sqr())
    });
    let mut p1 = SeriesRecorder::new("p1", |f: &Frame<'_>| {
        crate::grid::inner_product(phi1, f.psi).map_or(f64::NAN, |c| c.norm_sqr())
    });
    let mut snaps = Snapshots {
        targets: cfg.snapshot_times.clone(),
        half_window: 0.5 * stride.unwrap_or(0.0).max(cfg.dt),
        taken: Vec::new(),
    };
    let mut tracker = SolitonTracker::new(p.tau, dip_search_radius(g));
    let mut energy = SeriesRecorder::new("energy", |f: &Frame<'_>| gpe_energy(f.psi, f.potential, f.g));

    info!("protocol: theta = {:.6}, tau = {}, a = {}", p.theta, p.tau, p.a);
    let first = {
        let opts = EvolveOptions {
            observe_every: stride,
            observers: vec![&mut mean, &mut norm, &mut p0, &mut p1, &mut snaps],
            noise: src.as_mut().map(|s| s as &mut dyn PotentialNoise),
        };
        evolve(&prep.phi0.wavefunction, Drive::Protocol(p), g, (0.0, p.tau), &step, opts).stage("protocol")?
    };
    let pops = populations(&first.psi, &prep.phi0, &prep.phi1).stage("analysis")?;

    let last = if p.hold_time > 0.0 {
        info!("hold: {} time units", p.hold_time);
        let opts = EvolveOptions {
            observe_every: stride,
            observers: vec![&mut mean, &mut norm, &mut p0, &mut p1, &mut snaps, &mut tracker, &mut energy],
            noise: src.as_mut().map(|s| s as &mut dyn PotentialNoise),
        };
        evolve(&first.psi, Drive::Protocol(p), g, (p.tau, p.end_time()), &step, opts).stage("hold")?
    } else {
        first
    };

    let mean_x = mean.series;
    let hold = mean_x.since(p.tau);
    let dipole_amplitude = oscillation_amplitude(&hold, TAU).ok();
    let dipole_frequency = if hold.span() >= TAU {
        fit_sinusoid(&hold, (0.5, 2.0)).ok().map(|f| f.omega)
    } else {
        None
    };
    let soliton = tracker.into_track();
    let soliton_period_guess = TAU * SQRT_2;
    let (soliton_amplitude, soliton_period) = if soliton.lost || soliton.series.is_empty() {
        (None, None)
    } else {
        (
            oscillation_amplitude(&soliton.series, soliton_period_guess).ok(),
            crossing_period(&soliton.series),
        )
    };
    let norm_series = norm.series;
    let norm_drift = norm_series
        .values()
        .iter()
        .chain(std::iter::once(&last.psi.norm_sqr()))
        .map(|n| (n - 1.0).abs())
        .fold(0.0, f64::max);
    let energy_drift_rate = energy.series.values().first().and_then(|&e0| {
        let span = energy.series.span();
        (span > 0.0).then(|| {
            energy.series.values().iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / (e0.abs() * span)
        })
    });
    let mut snapshots = snaps.taken;
    snapshots.sort_by(|a, b| a.0.total_cmp(&b.0));

    Ok(RunResult {
        theta: p.theta,
        g,
        populations: pops,
        mean_x,
        p0_series: p0.series,
        p1_series: p1.series,
        dipole_amplitude,
        dipole_frequency,
        soliton,
        soliton_amplitude,
        soliton_period,
        norm_drift,
        energy_drift_rate,
        snapshots,
        box_confined: last.psi.is_confined(),
        final_state: last.psi,
    })
}

pub fn run_interferometer(cfg: &RunConfig) -> Result<RunResult> {
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg, cfg.observe_every, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub populations: Populations,
    pub dipole_amplitude: Option<f64>,
    pub soliton_amplitude: Option<f64>,
}

#[derive(Debug)]
pub struct ScanEntry {
    pub theta: f64,
    pub outcome: Result<ScanPoint>,
}

/// One run per phase, in parallel; failures are kept per entry.
pub fn scan_phase(cfg: &RunConfig, thetas: &[f64]) -> Result<Vec<ScanEntry>> {
    if thetas.len() < 2 {
        return Err(Error::Config("a phase scan needs at least two phases".into()));
    }
    let prep = prepare(cfg)?;
    let stride = Some(cfg.observe_every.unwrap_or(SCAN_STRIDE));
    Ok(thetas
        .par_iter()
        .map(|&theta| {
            let outcome = cfg.with_theta(theta).and_then(|c| {
                let r = run_prepared(&prep, &c, stride, 0)?;
                Ok(ScanPoint {
                    populations: r.populations,
                    dipole_amplitude: r.dipole_amplitude,
                    soliton_amplitude: r.soliton_amplitude,
                })
            });
            ScanEntry { theta, outcome }
        })
        .collect())
}

/// Noise ensemble at one phase and scattering rate. Realization `i` uses
/// stream `i`, so results do not depend on the thread count.
pub fn run_ensemble(prep: &Prepared, cfg: &RunConfig, theta: f64, gamma: f64, n: usize) -> Result<EnsembleResult> {
    let c = cfg.with_theta(theta)?.with_noise(gamma)?;
    if c.noise.is_none() {
        let p = populations_at_tau(prep, &c, None, 0).stage("ensemble")?;
        return summarize(theta, gamma, &vec![p; n]);
    }
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| populations_at_tau(prep, &c, c.noise.as_ref(), i))
        .collect::<Result<Vec<_>>>()
        .stage("ensemble")?;
    summarize(theta, gamma, &samples)
}

/// Coherence limits of the mean-field description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceLimits {
    pub t_phi: f64,
    pub tau_diff: f64,
    /// Whether the given operation time stays below `tau_diff`.
    pub tau_ok: bool,
}

/// `T_phi = N / (Omega_perp/Omega + (3g/(4 sqrt 2))^(2/3))`,
/// `tau_diff = (2 sqrt 3 / g)^(2/3) sqrt N`.
pub fn coherence_limits(n_atoms: f64, g: f64, trap_ratio: f64, tau: f64) -> Result<CoherenceLimits> {
    if !(n_atoms >= 1.0) {
        return Err(Error::param("n_atoms", format!("{n_atoms} must be >= 1")));
    }
    if !(g > 0.0) {
        return Err(Error::param("g", format!("{g} must be > 0")));
    }
    let t_phi = n_atoms / (trap_ratio + thomas_fermi_mu(g));
    let tau_diff = (2.0 * 3f64.sqrt() / g).powf(2.0 / 3.0) * n_atoms.sqrt();
    Ok(CoherenceLimits {
        t_phi,
        tau_diff,
        tau_ok: tau < tau_diff,
    })
}

/// Growth-rate curve and critical separation for one coupling.
#[derive(Debug)]
pub struct BdgScan {
    pub g: f64,
    /// `(d, lowest representative frequencies)` of the antisymmetric state.
    pub rows: Vec<(f64, Vec<num_complex::Complex64>)>,
    pub critical: Result<CriticalSeparation>,
}

pub fn bdg_scan(cfg: &RunConfig) -> Result<Vec<BdgScan>> {
    let grid = make_grid(cfg.bdg_n_points, cfg.bdg_half_width)?;
    let opts = SolverOptions {
        tol: cfg.solver_tol,
        ..SolverOptions::default()
    };
    let n = cfg.bdg_coarse.max(2);
    let ds: Vec<f64> = (0..n)
        .map(|i| cfg.bdg_d_min + (cfg.bdg_d_max - cfg.bdg_d_min) * i as f64 / (n - 1) as f64)
        .collect();
    cfg.bdg_couplings
        .iter()
        .map(|&g| {
            info!("BdG scan at g = {g}");
            let rows = ds
                .par_iter()
                .map(|&d| {
                    let s = double_well_state(&grid, d, g, Parity::Odd, &opts)?;
                    let v = sample_double_well(&grid, d);
                    let spec = bdg_spectrum(&s, &v, cfg.bdg_modes)?;
                    Ok((d, spec.modes.iter().map(|m| m.frequency).collect()))
                })
                .collect::<Result<Vec<_>>>()
                .stage("bdg spectrum")?;
            let critical = critical_separation(
                &grid,
                g,
                (cfg.bdg_d_min, cfg.bdg_d_max),
                cfg.bdg_d_tol,
                cfg.bdg_coarse,
                &opts,
            );
            Ok(BdgScan { g, rows, critical })
        })
        .collect()
}

/// Mode table for the configured protocol on the two-mode grid.
pub fn two_mode_table(cfg: &RunConfig) -> Result<ModeTable> {
    let grid = make_grid(cfg.two_mode_n_points, cfg.half_width)?;
    let opts = SolverOptions {
        tol: cfg.solver_tol,
        ..SolverOptions::default()
    };
    let d_max = (2.0 * cfg.protocol.a).max(1e-6);
    ModeTable::build(&grid, cfg.g()?, d_max, cfg.two_mode_table_points, &opts).stage("mode table")
}

pub fn two_mode_run(cfg: &RunConfig, table: &ModeTable) -> Result<TwoModeRun> {
    integrate_two_mode(
        TwoModeState::ground(),
        &cfg.protocol,
        table,
        cfg.two_mode_dt,
        cfg.observe_every.unwrap_or(SCAN_STRIDE),
    )
    .stage("two-mode")
}

pub fn two_mode_scan(cfg: &RunConfig, table: &ModeTable, thetas: &[f64]) -> Result<Vec<f64>> {
    scan_two_mode(&cfg.protocol, table, thetas, cfg.two_mode_dt).stage("two-mode scan")
}

// ---------------------------------------------------------------- output

/// Fixed 17-significant-digit floats on top of the pretty layout.
struct FixedFloats(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// JSON text with every float written as `{:.16e}`.
pub fn to_json_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing a JSON value into memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn opt(x: Option<f64>) -> Value {
    x.filter(|v| v.is_finite()).map_or(Value::Null, Value::from)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), fmt)
}

/// Configuration identity, without timestamps or host details.
pub fn provenance(cfg: &RunConfig) -> Value {
    json!({
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "dt": cfg.dt,
        "grid": { "n_points": cfg.n_points, "half_width": cfg.half_width },
        "noise_convention": "<V(x,t) V(x',t')> = 2 gamma delta(t - t') l^2 / ((x - x')^2 + l^2)",
    })
}

fn populations_json(p: &Populations) -> Value {
    json!({ "p0": p.p0, "p1": p.p1, "p_ex": p.p_ex })
}

pub fn run_summary(result: &RunResult, cfg: &RunConfig) -> Value {
    let s = &result.soliton;
    json!({
        "kind": "run",
        "theta": result.theta,
        "g": result.g,
        "protocol": {
            "a": cfg.protocol.a,
            "tau": cfg.protocol.tau,
            "hold_time": cfg.protocol.hold_time,
        },
        "populations": populations_json(&result.populations),
        "dipole_amplitude": opt(result.dipole_amplitude),
        "dipole_frequency": opt(result.dipole_frequency),
        "soliton": {
            "found": !s.series.is_empty(),
            "lost": s.lost,
            "lost_at": opt(s.lost_at),
            "amplitude": opt(result.soliton_amplitude),
            "period": opt(result.soliton_period),
        },
        "diagnostics": {
            "norm_drift": result.norm_drift,
            "energy_drift_rate": opt(result.energy_drift_rate),
            "box_confined": result.box_confined,
        },
        "provenance": provenance(cfg),
    })
}

/// Writes `summary.json`, and with an observation stride the series files
/// and density snapshots.
pub fn emit_run(result: &RunResult, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.json");
    write_file(&summary, &to_json_string(&run_summary(result, cfg)))?;
    written.push(summary);
    if cfg.observe_every.is_none() {
        return Ok(written);
    }
    let meanx = dir.join("meanx.csv");
    result.mean_x.write_csv(&meanx)?;
    written.push(meanx);

    let soliton = dir.join("soliton.csv");
    let mut text = String::from("t,q,dip_density\n");
    for ((t, q), d) in result
        .soliton
        .series
        .times()
        .iter()
        .zip(result.soliton.series.values())
        .zip(result.soliton.depth.values())
    {
        text.push_str(&format!("{},{},{}\n", fmt(*t), fmt(*q), fmt(*d)));
    }
    write_file(&soliton, &text)?;
    written.push(soliton);

    let pops = dir.join("populations.csv");
    let mut text = String::from("t,p0,p1,p_ex\n");
    for ((t, a), b) in result
        .p0_series
        .times()
        .iter()
        .zip(result.p0_series.values())
        .zip(result.p1_series.values())
    {
        let ex = (1.0 - a - b).clamp(0.0, 1.0);
        text.push_str(&format!("{},{},{},{}\n", fmt(*t), fmt(*a), fmt(*b), fmt(ex)));
    }
    write_file(&pops, &text)?;
    written.push(pops);

    let x = result.final_state.grid().x();
    for (t, rho) in &result.snapshots {
        let path = dir.join(format!("density_t{t:.3}.csv"));
        let mut text = String::from("x,density\n");
        for (xi, r) in x.iter().zip(rho) {
            text.push_str(&format!("{},{}\n", fmt(*xi), fmt(*r)));
        }
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_scan(entries: &[ScanEntry], cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut csv = String::from("theta,p0,p1,p_ex,dipole_amplitude,soliton_amplitude,error\n");
    let mut rows = Vec::new();
    for e in entries {
        match &e.outcome {
            Ok(p) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},\n",
                    fmt(e.theta),
                    fmt(p.populations.p0),
                    fmt(p.populations.p1),
                    fmt(p.populations.p_ex),
                    fmt_opt(p.dipole_amplitude),
                    fmt_opt(p.soliton_amplitude)
                ));
                rows.push(json!({
                    "theta": e.theta,
                    "populations": populations_json(&p.populations),
                    "dipole_amplitude": opt(p.dipole_amplitude),
                    "soliton_amplitude": opt(p.soliton_amplitude),
                    "soliton_found": p.soliton_amplitude.is_some(),
                }));
            }
            Err(err) => {
                let msg = err.to_string().replace(',', ";");
                csv.push_str(&format!("{},nan,nan,nan,nan,nan,{msg}\n", fmt(e.theta)));
                rows.push(json!({ "theta": e.theta, "error": err.to_string() }));
            }
        }
    }
    write_file(&dir.join("scan.csv"), &csv)?;
    let summary = json!({
        "kind": "scan-phase",
        "g": cfg.g()?,
        "points": rows,
        "provenance": provenance(cfg),
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))
}

pub fn emit_ensembles(results: &[EnsembleResult], cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut csv = String::from("theta,gamma,n,mean_p0,stderr_p0,mean_p1,stderr_p1,mean_pex,stderr_pex\n");
    let mut rows = Vec::new();
    for r in results {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt(r.theta),
            fmt(r.gamma),
            r.n_realizations,
            fmt(r.mean_p0),
            fmt(r.stderr_p0),
            fmt(r.mean_p1),
            fmt(r.stderr_p1),
            fmt(r.mean_pex),
            fmt(r.stderr_pex)
        ));
        rows.push(json!({
            "theta": r.theta,
            "gamma": r.gamma,
            "n_realizations": r.n_realizations,
            "mean": { "p0": r.mean_p0, "p1": r.mean_p1, "p_ex": r.mean_pex },
            "stderr": { "p0": r.stderr_p0, "p1": r.stderr_p1, "p_ex": r.stderr_pex },
        }));
    }
    write_file(&dir.join("ensemble.csv"), &csv)?;
    let summary = json!({
        "kind": "ensemble",
        "g": cfg.g()?,
        "corr_length": cfg.corr_length,
        "ensembles": rows,
        "provenance": provenance(cfg),
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))
}

pub fn emit_bdg(scans: &[BdgScan], cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut header = String::from("g,d");
    for k in 1..=cfg.bdg_modes {
        header.push_str(&format!(",re_omega{k},im_omega{k}"));
    }
    let mut csv = header + "\n";
    let mut out = Vec::new();
    for s in scans {
        for (d, ws) in &s.rows {
            csv.push_str(&format!("{},{}", fmt(s.g), fmt(*d)));
            for k in 0..cfg.bdg_modes {
                match ws.get(k) {
                    Some(w) => csv.push_str(&format!(",{},{}", fmt(w.re), fmt(w.im))),
                    None => csv.push_str(",nan,nan"),
                }
            }
            csv.push('\n');
        }
        out.push(match &s.critical {
            Ok(c) => json!({ "g": s.g, "d_crit": c.d_crit, "bracket": [c.bracket.0, c.bracket.1] }),
            Err(e) => json!({ "g": s.g, "d_crit": Value::Null, "error": e.to_string() }),
        });
    }
    write_file(&dir.join("bdg.csv"), &csv)?;
    let summary = json!({
        "kind": "bdg-scan",
        "grid": { "n_points": cfg.bdg_n_points, "half_width": cfg.bdg_half_width },
        "d_range": [cfg.bdg_d_min, cfg.bdg_d_max],
        "critical_separations": out,
        "provenance": provenance(cfg),
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))
}

pub fn emit_ground_state(state: &StationaryState, cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    state.wavefunction.write_csv(&dir.join("ground_state.csv"))?;
    let v = sample_double_well(state.wavefunction.grid(), 0.0);
    let summary = json!({
        "kind": "ground-state",
        "g": state.coupling,
        "chemical_potential": state.chemical_potential,
        "thomas_fermi_mu": thomas_fermi_mu(state.coupling),
        "energy": gpe_energy(&state.wavefunction, &v, state.coupling),
        "residual": state.residual,
        "boundary_ratio": state.wavefunction.boundary_ratio(),
        "provenance": provenance(cfg),
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))
}

pub fn emit_two_mode(run: &TwoModeRun, scan: &[(f64, f64)], cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut csv = String::from("t,p0,p1\n");
    for ((t, a), b) in run.p0.times().iter().zip(run.p0.values()).zip(run.p1.values()) {
        csv.push_str(&format!("{},{},{}\n", fmt(*t), fmt(*a), fmt(*b)));
    }
    write_file(&dir.join("two_mode.csv"), &csv)?;
    let mut csv = String::from("theta,p0\n");
    for (t, p) in scan {
        csv.push_str(&format!("{},{}\n", fmt(*t), fmt(*p)));
    }
    write_file(&dir.join("two_mode_scan.csv"), &csv)?;
    let (p0, p1) = run.final_state.populations();
    let summary = json!({
        "kind": "two-mode",
        "g": cfg.g()?,
        "theta": cfg.protocol.theta,
        "final": { "p0": p0, "p1": p1, "relative_phase": run.final_state.relative_phase() },
        "max_norm_drift": run.max_norm_drift,
        "scan": scan.iter().map(|(t, p)| json!({ "theta": t, "p0": p })).collect::<Vec<_>>(),
        "provenance": provenance(cfg),
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))
}

pub fn limits_summary(limits: &CoherenceLimits, cfg: &RunConfig) -> Result<Value> {
    Ok(json!({
        "kind": "limits",
        "n_atoms": cfg.n_atoms,
        "g": cfg.g()?,
        "trap_ratio": cfg.trap_ratio,
        "tau": cfg.protocol.tau,
        "t_phi": limits.t_phi,
        "tau_diff": limits.tau_diff,
        "tau_below_tau_diff": limits.tau_ok,
        "provenance": provenance(cfg),
    }))
}

pub fn emit_limits(limits: &CoherenceLimits, cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("summary.json"), &to_json_string(&limits_summary(limits, cfg)?))
}

/// Default phase list: the configured scan.
pub fn default_thetas(cfg: &RunConfig) -> Vec<f64> {
    cfg.thetas.iter().map(|t| t.rem_euclid(2.0 * PI)).collect()
}
