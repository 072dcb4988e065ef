use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use bec_interferometer::config::{RunConfig, Settings, ENV_PREFIX};
use bec_interferometer::driver::{self, coherence_limits, prepare, run_ensemble};
use bec_interferometer::error::{Error, Result};
use bec_interferometer::grid::make_grid;
use bec_interferometer::potentials::sample_double_well;
use bec_interferometer::stationary::ground_state;

#[derive(Parser)]
#[command(name = "becsim", version, about = "1D condensate interferometer in a time-dependent double well")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split, imprint, recombine and hold.
    Run(Wrapped),
    /// One run per phase in `thetas`.
    ScanPhase(Wrapped),
    /// Noise ensembles for every entry of `gammas`.
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Repeat over every phase in `thetas` instead of `theta` alone.
        #[arg(long)]
        scan: bool,
    },
    /// Stability of the antisymmetric state versus well separation.
    BdgScan(Wrapped),
    /// Ground state of the harmonic trap.
    GroundState(Wrapped),
    /// Two-mode model along the protocol plus a phase scan.
    TwoMode(Wrapped),
    /// Coherence-time and phase-diffusion estimates.
    Limits(Wrapped),
    /// Print the resolved configuration.
    Config(Wrapped),
}

#[derive(Args)]
struct Wrapped {
    #[command(flatten)]
    common: Common,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut settings = Settings::new();
    if let Some(path) = &common.config {
        settings.apply_file(path)?;
    }
    settings.apply_env(std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)))?;
    for pair in &common.overrides {
        settings.set_pair(pair)?;
    }
    let mut cfg = settings.build()?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<()> {
    let common = match &command {
        Command::Ensemble { common, .. } => common,
        Command::Run(w)
        | Command::ScanPhase(w)
        | Command::BdgScan(w)
        | Command::GroundState(w)
        | Command::TwoMode(w)
        | Command::Limits(w)
        | Command::Config(w) => &w.common,
    };
    let cfg = load(common)?;
    let jobs = common.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let dir = cfg.output_dir.clone();
    pool.install(|| match command {
        Command::Run(_) => {
            let result = driver::run_interferometer(&cfg)?;
            let files = driver::emit_run(&result, &cfg, &dir)?;
            let p = result.populations;
            println!("p0 = {:.6}  p1 = {:.6}  p_ex = {:.6}", p.p0, p.p1, p.p_ex);
            info!("wrote {} files to {}", files.len(), dir.display());
            Ok(())
        }
        Command::ScanPhase(_) => {
            let entries = driver::scan_phase(&cfg, &cfg.thetas)?;
            for e in &entries {
                match &e.outcome {
                    Ok(p) => println!(
                        "theta/pi = {:.4}  p0 = {:.6}  dipole = {:.6}  soliton = {}",
                        e.theta / std::f64::consts::PI,
                        p.populations.p0,
                        p.dipole_amplitude.unwrap_or(f64::NAN),
                        p.soliton_amplitude.map_or("not found".to_string(), |a| format!("{a:.6}"))
                    ),
                    Err(err) => println!("theta/pi = {:.4}  failed: {err}", e.theta / std::f64::consts::PI),
                }
            }
            driver::emit_scan(&entries, &cfg, &dir)
        }
        Command::Ensemble { scan, .. } => {
            let thetas = if scan { cfg.thetas.clone() } else { vec![cfg.protocol.theta] };
            let prep = prepare(&cfg)?;
            let mut results = Vec::new();
            for &theta in &thetas {
                for &gamma in &cfg.gammas {
                    let r = run_ensemble(&prep, &cfg, theta, gamma, cfg.ensemble_size)?;
                    println!(
                        "theta/pi = {:.4}  gamma = {:.1e}  p0 = {:.6} +- {:.6}",
                        theta / std::f64::consts::PI,
                        gamma,
                        r.mean_p0,
                        r.stderr_p0
                    );
                    results.push(r);
                }
            }
            driver::emit_ensembles(&results, &cfg, &dir)
        }
        Command::BdgScan(_) => {
            let scans = driver::bdg_scan(&cfg)?;
            for s in &scans {
                match &s.critical {
                    Ok(c) => println!("g = {}  d_crit = {:.4}", s.g, c.d_crit),
                    Err(e) => println!("g = {}  {e}", s.g),
                }
            }
            driver::emit_bdg(&scans, &cfg, &dir)
        }
        Command::GroundState(_) => {
            let grid = make_grid(cfg.n_points, cfg.half_width)?;
            let v = sample_double_well(&grid, 0.0);
            let state = ground_state(&grid, &v, cfg.g()?, cfg.solver_tol)?;
            println!("mu = {:.10}", state.chemical_potential);
            driver::emit_ground_state(&state, &cfg, &dir)
        }
        Command::TwoMode(_) => {
            let table = driver::two_mode_table(&cfg)?;
            let run = driver::two_mode_run(&cfg, &table)?;
            let p0 = driver::two_mode_scan(&cfg, &table, &cfg.thetas)?;
            let scan: Vec<(f64, f64)> = cfg.thetas.iter().copied().zip(p0).collect();
            let (a, b) = run.final_state.populations();
            println!("p0 = {a:.6}  p1 = {b:.6}");
            driver::emit_two_mode(&run, &scan, &cfg, &dir)
        }
        Command::Limits(_) => {
            let limits = coherence_limits(cfg.n_atoms, cfg.g()?, cfg.trap_ratio, cfg.protocol.tau)?;
            println!(
                "T_phi = {:.4}  tau_diff = {:.4}  tau < tau_diff: {}",
                limits.t_phi, limits.tau_diff, limits.tau_ok
            );
            driver::emit_limits(&limits, &cfg, &dir)
        }
        Command::Config(_) => {
            print!("{}", cfg.canonical());
            println!("# hash {}", cfg.hash());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
