//! Nonlinear eigenstates of the GPE in a fixed trap.
//!
//! States are obtained by imaginary-time relaxation with parity projection
//! after every step, then polished by Newton iteration on the discretized
//! stationary equation restricted to the parity sector. The split-step fixed
//! point carries an `O(dt^2)` bias; the Newton stage removes it so the
//! residual of the exact discrete operator drops below tolerance.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Fourier, Grid, WaveFunction};
use crate::potentials::sample_double_well;
use crate::propagator::{SplitStepper, StepperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationaryState {
    pub wavefunction: WaveFunction,
    pub chemical_potential: f64,
    pub parity: Parity,
    /// Well separation `d` when the trap is a member of the double-well family.
    pub separation: Option<f64>,
    pub coupling: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub dt: f64,
    pub tol: f64,
    /// Residual at which relaxation hands over to Newton polishing.
    pub handover: f64,
    pub max_relax_steps: usize,
    pub max_newton: usize,
    pub parity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dt: 1e-3,
            tol: 1e-8,
            handover: 1e-3,
            max_relax_steps: 400_000,
            max_newton: 30,
            parity_tol: 1e-9,
        }
    }
}

/// `H psi = (T + V + g|psi|^2) psi` evaluated spectrally.
pub fn apply_hamiltonian(psi: &WaveFunction, v: &[f64], g: f64, fourier: &Fourier) -> Vec<Complex64> {
    let grid = psi.grid();
    let n = grid.n_points();
    let mut buf = psi.values().to_vec();
    let mut scratch = vec![Complex64::default(); fourier.scratch_len()];
    fourier.forward(&mut buf, &mut scratch);
    for (c, &k2) in buf.iter_mut().zip(grid.k_squared()) {
        *c *= 0.5 * k2 / n as f64;
    }
    fourier.inverse(&mut buf, &mut scratch);
    for ((h, c), &vi) in buf.iter_mut().zip(psi.values()).zip(v) {
        *h += (vi + g * c.norm_sqr()) * c;
    }
    buf
}

/// Returns `(mu, ||H psi - mu psi||)` with `mu = <psi|H|psi> / <psi|psi>`.
pub fn residual(psi: &WaveFunction, v: &[f64], g: f64, fourier: &Fourier) -> (f64, f64) {
    let hpsi = apply_hamiltonian(psi, v, g, fourier);
    let dx = psi.grid().dx();
    let norm = psi.norm_sqr();
    let mu = psi
        .values()
        .iter()
        .zip(&hpsi)
        .map(|(a, b)| (a.conj() * b).re)
        .sum::<f64>()
        * dx
        / norm;
    let r = psi
        .values()
        .iter()
        .zip(&hpsi)
        .map(|(a, b)| (b - mu * a).norm_sqr())
        .sum::<f64>()
        * dx;
    (mu, r.sqrt())
}

/// Harmonic-oscillator states `n = 0, 1` used as relaxation seeds.
pub fn harmonic_seed(grid: Arc<Grid>, parity: Parity) -> WaveFunction {
    let norm = std::f64::consts::PI.powf(-0.25);
    match parity {
        Parity::Even => WaveFunction::from_real(grid, |x| norm * (-0.5 * x * x).exp()),
        Parity::Odd => WaveFunction::from_real(grid, |x| {
            norm * std::f64::consts::SQRT_2 * x * (-0.5 * x * x).exp()
        }),
    }
}

fn project_parity(values: &mut [Complex64], grid: &Grid, parity: Parity) {
    let s = parity.sign();
    let n = values.len();
    for i in 0..=n / 2 {
        let j = grid.mirror(i);
        let a = values[i];
        let b = values[j];
        let sym = 0.5 * (a + s * b);
        values[i] = sym;
        values[j] = s * sym;
    }
}

fn parity_deviation(psi: &WaveFunction, parity: Parity) -> f64 {
    let grid = psi.grid();
    let s = parity.sign();
    (0..grid.n_points())
        .map(|i| (psi.values()[i] - s * psi.values()[grid.mirror(i)]).norm())
        .fold(0.0, f64::max)
}

/// Rotates to a real field, positive at the density peak on `x >= 0`.
fn fix_gauge(psi: &mut WaveFunction) {
    let grid = psi.grid().clone();
    let c = grid.center();
    let (peak, _) = psi.values()[c..]
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, v)| {
            let r = v.norm_sqr();
            if r >= best.1 {
                (i, r)
            } else {
                best
            }
        });
    let phase = psi.values()[c + peak].arg();
    let rot = Complex64::from_polar(1.0, -phase);
    for v in psi.values_mut() {
        *v = Complex64::new((*v * rot).re, 0.0);
    }
}

/// Index set and multiplicities for one parity sector of the periodic grid.
fn sector(n: usize, parity: Parity) -> (Vec<usize>, Vec<f64>) {
    let half = n / 2;
    match parity {
        Parity::Even => {
            let idx: Vec<usize> = (0..=half).collect();
            let w = idx
                .iter()
                .map(|&i| if i == 0 || i == half { 1.0 } else { 2.0 })
                .collect();
            (idx, w)
        }
        Parity::Odd => {
            let idx: Vec<usize> = (1..half).collect();
            let w = vec![2.0; idx.len()];
            (idx, w)
        }
    }
}

/// Newton iteration on `(T + V + g phi^2 - mu) phi = 0`, `||phi|| = 1` for a
/// real field within one parity sector.
fn newton_polish(
    psi: &WaveFunction,
    v: &[f64],
    g: f64,
    parity: Parity,
    opts: &SolverOptions,
    fourier: &Fourier,
) -> Result<WaveFunction> {
    let grid = psi.grid().clone();
    let n = grid.n_points();
    let dx = grid.dx();
    let row = grid.kinetic_row();
    let (idx, w) = sector(n, parity);
    let m = idx.len();
    let s = parity.sign();

    let mut kin = DMatrix::<f64>::zeros(m, m);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let direct = row[(i + n - j) % n];
            let mirrored = if j == 0 || j == n / 2 {
                0.0
            } else {
                s * row[(i + j) % n]
            };
            kin[(a, b)] = direct + mirrored;
        }
    }

    let mut phi: Vec<f64> = idx.iter().map(|&i| psi.values()[i].re).collect();
    let expand = |phi: &[f64]| -> WaveFunction {
        let mut full = vec![Complex64::default(); n];
        for (a, &i) in idx.iter().enumerate() {
            full[i] = Complex64::new(phi[a], 0.0);
            full[grid.mirror(i)] = Complex64::new(s * phi[a], 0.0);
        }
        WaveFunction::new(grid.clone(), full).expect("sector expansion")
    };
    let (mut mu, _) = residual(&expand(&phi), v, g, fourier);

    let eval = |phi: &[f64], mu: f64| -> DVector<f64> {
        let p = DVector::from_column_slice(phi);
        let tp = &kin * &p;
        let mut f = DVector::<f64>::zeros(m + 1);
        for (a, &i) in idx.iter().enumerate() {
            f[a] = tp[a] + (v[i] + g * phi[a] * phi[a] - mu) * phi[a];
        }
        f[m] = 0.5 * (phi.iter().zip(&w).map(|(p, w)| w * p * p).sum::<f64>() * dx - 1.0);
        f
    };
    let merit = |f: &DVector<f64>| -> f64 {
        (0..m).map(|a| w[a] * f[a] * f[a]).sum::<f64>() * dx + f[m] * f[m]
    };

    let mut f = eval(&phi, mu);
    for _ in 0..opts.max_newton {
        let candidate = expand(&phi);
        let (_, res) = residual(&candidate, v, g, fourier);
        if res < 0.1 * opts.tol {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m + 1, m + 1);
        jac.view_mut((0, 0), (m, m)).copy_from(&kin);
        for (a, &i) in idx.iter().enumerate() {
            jac[(a, a)] += v[i] + 3.0 * g * phi[a] * phi[a] - mu;
            jac[(a, m)] = -phi[a];
            jac[(m, a)] = w[a] * phi[a] * dx;
        }
        let delta = jac
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::Eigen("singular Newton system".into()))?;
        let base = merit(&f);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().enumerate().map(|(a, p)| p + lambda * delta[a]).collect();
            let trial_mu = mu + lambda * delta[m];
            let ft = eval(&trial, trial_mu);
            if merit(&ft) < base || lambda < 1e-3 {
                phi = trial;
                mu = trial_mu;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    let mut out = expand(&phi);
    out.normalize();
    Ok(out)
}

/// Stationary state of the given parity in the trap `v`.
pub fn solve(
    grid: &Arc<Grid>,
    v: &[f64],
    g: f64,
    parity: Parity,
    seed: Option<&WaveFunction>,
    opts: &SolverOptions,
) -> Result<StationaryState> {
    if v.len() != grid.n_points() {
        return Err(Error::GridMismatch);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    let fourier = Fourier::new(grid.n_points());
    let mut psi = match seed {
        Some(s) if s.grid().as_ref() == grid.as_ref() => s.clone(),
        Some(_) => return Err(Error::GridMismatch),
        None => harmonic_seed(grid.clone(), parity),
    };
    project_parity(psi.values_mut(), grid, parity);
    psi.normalize();

    let mut stepper = SplitStepper::new(grid.clone(), g, StepperConfig::imaginary(opts.dt))?;
    let handover = opts.handover.max(opts.tol);
    let check_every = 200;
    let mut steps = 0;
    let mut res = residual(&psi, v, g, &fourier).1;
    let mut last_res = f64::INFINITY;
    while res > handover {
        if steps >= opts.max_relax_steps {
            return Err(Error::NotConverged {
                iterations: steps,
                residual: res,
            });
        }
        for _ in 0..check_every {
            stepper.step(psi.values_mut(), v);
            project_parity(psi.values_mut(), grid, parity);
        }
        psi.normalize();
        steps += check_every;
        if !psi.is_finite() {
            return Err(Error::NonFinite {
                step: steps as u64,
                t: steps as f64 * opts.dt,
            });
        }
        res = residual(&psi, v, g, &fourier).1;
        // Split-step bias floor reached; let Newton take over.
        if res > 0.999 * last_res && res < 1e-2 {
            break;
        }
        last_res = res;
    }

    fix_gauge(&mut psi);
    let psi = newton_polish(&psi, v, g, parity, opts, &fourier)?;
    let mut psi = psi;
    fix_gauge(&mut psi);
    let (mu, res) = residual(&psi, v, g, &fourier);
    if !(res < opts.tol) {
        return Err(Error::NotConverged {
            iterations: steps,
            residual: res,
        });
    }
    let dev = parity_deviation(&psi, parity);
    if dev > opts.parity_tol {
        return Err(Error::ParityViolation { deviation: dev });
    }
    Ok(StationaryState {
        wavefunction: psi,
        chemical_potential: mu,
        parity,
        separation: None,
        coupling: g,
        residual: res,
    })
}

pub fn ground_state(grid: &Arc<Grid>, v: &[f64], g: f64, tol: f64) -> Result<StationaryState> {
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    solve(grid, v, g, Parity::Even, None, &opts)
}

pub fn first_excited(grid: &Arc<Grid>, v: &[f64], g: f64, tol: f64) -> Result<StationaryState> {
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    solve(grid, v, g, Parity::Odd, None, &opts)
}

/// Eigenstate of the double well with separation `d`.
pub fn double_well_state(
    grid: &Arc<Grid>,
    d: f64,
    g: f64,
    parity: Parity,
    opts: &SolverOptions,
) -> Result<StationaryState> {
    let v = sample_double_well(grid, d);
    let mut s = solve(grid, &v, g, parity, None, opts)?;
    s.separation = Some(d);
    Ok(s)
}

/// `mu` from the norm decay of one imaginary-time step, `-ln(norm)/dt`.
/// The mean field is frozen at the state's density, leaving an `O(dt^2)` bias.
pub fn mu_from_norm_decay(state: &StationaryState, v: &[f64], dt: f64) -> Result<f64> {
    let psi = &state.wavefunction;
    if v.len() != psi.grid().n_points() {
        return Err(Error::GridMismatch);
    }
    let scale = state.coupling / psi.norm_sqr();
    let field: Vec<f64> = v.iter().zip(psi.density()).map(|(&vi, rho)| vi + scale * rho).collect();
    let mut stepper = SplitStepper::new(psi.grid().clone(), 0.0, StepperConfig::imaginary(dt))?;
    let mut values = psi.values().to_vec();
    let norm = stepper.step(&mut values, &field) / psi.norm_sqr().sqrt();
    Ok(-norm.ln() / dt)
}

/// On-disk cache of stationary states in the binary field format.
#[derive(Debug, Clone)]
pub struct StateCache {
    dir: PathBuf,
}

impl StateCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(StateCache { dir })
    }

    pub fn path_for(&self, grid: &Grid, d: f64, g: f64, parity: Parity) -> PathBuf {
        self.dir.join(format!(
            "state_{}_n{}_L{:016x}_g{:016x}_d{:016x}.bin",
            parity.label(),
            grid.n_points(),
            grid.half_width().to_bits(),
            g.to_bits(),
            d.to_bits()
        ))
    }

    pub fn get_or_compute(
        &self,
        grid: &Arc<Grid>,
        d: f64,
        g: f64,
        parity: Parity,
        opts: &SolverOptions,
    ) -> Result<StationaryState> {
        let path = self.path_for(grid, d, g, parity);
        if path.exists() {
            let psi = WaveFunction::read_binary(&path)?;
            if psi.grid().as_ref() == grid.as_ref() {
                let psi = WaveFunction::new(grid.clone(), psi.into_values())?;
                let v = sample_double_well(grid, d);
                let (mu, res) = residual(&psi, &v, g, &Fourier::new(grid.n_points()));
                if res < opts.tol {
                    return Ok(StationaryState {
                        wavefunction: psi,
                        chemical_potential: mu,
                        parity,
                        separation: Some(d),
                        coupling: g,
                        residual: res,
                    });
                }
            }
        }
        let state = double_well_state(grid, d, g, parity, opts)?;
        state.wavefunction.write_binary(&path)?;
        Ok(state)
    }
}
