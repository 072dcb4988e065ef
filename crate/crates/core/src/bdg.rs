//! Bogoliubov-de Gennes stability analysis of real stationary states.
//!
//! The operator acts on `(u, v)` as
//!
//! ```text
//! L = [[ A,  B],      A = T + V - mu + 2 g phi^2
//!      [-B, -A]],     B = g phi^2
//! ```
//!
//! with `T` the spectral kinetic matrix, so the state and its fluctuations
//! share one discretization and the Goldstone mode sits at zero to solver
//! precision.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Grid, WaveFunction};
use crate::potentials::sample_double_well;
use crate::stationary::{double_well_state, Parity, SolverOptions, StationaryState};

/// `|omega|` below which eigenvalues belong to the Goldstone pair.
pub const GOLDSTONE_TOL: f64 = 1e-4;
/// Growth rate that counts as dynamical instability.
pub const ONSET_THRESHOLD: f64 = 1e-3;
/// Largest tolerated relative change of the lowest `|omega|` under refinement.
pub const REFINEMENT_TOL: f64 = 0.01;

/// Real and imaginary parts below this (relative to `max(1, |omega|)`) are zero.
const AXIS_TOL: f64 = 1e-7;
/// Relative Bogoliubov norm below which a mode counts as zero-norm.
const ZERO_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BdGMode {
    pub frequency: Complex64,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    /// Sign of `int (|u|^2 - |v|^2) dx`, 0 for zero-norm modes.
    pub norm_sign: i8,
    /// `||L w - omega w|| / ||w||`.
    pub residual: f64,
}

impl BdGMode {
    pub fn is_unstable(&self) -> bool {
        self.frequency.im.abs() > AXIS_TOL * self.frequency.norm().max(1.0)
    }

    /// `phi + eps (u + conj(v))`, the seed of a linear perturbation along this mode.
    pub fn perturb(&self, state: &StationaryState, eps: f64) -> Result<WaveFunction> {
        let psi = &state.wavefunction;
        let values = psi
            .values()
            .iter()
            .zip(self.u.iter().zip(&self.v))
            .map(|(p, (u, v))| p + eps * (u + v.conj()))
            .collect();
        WaveFunction::new(psi.grid().clone(), values)
    }
}

#[derive(Debug, Clone)]
pub struct BdgSpectrum {
    pub goldstone: BdGMode,
    /// Representatives `Re omega > 0`, or `Im omega > 0` on the imaginary
    /// axis, sorted by `|omega|`, Goldstone excluded.
    pub modes: Vec<BdGMode>,
    /// Every eigenvalue of the discretized operator.
    pub eigenvalues: Vec<Complex64>,
}

impl BdgSpectrum {
    /// Largest `|Im omega|` among all eigenvalues outside the Goldstone pair.
    pub fn max_growth_rate(&self) -> f64 {
        max_growth_rate(&self.eigenvalues)
    }

    /// Every returned mode has its partners `-omega*` and `omega*` in the spectrum.
    pub fn pairs_verified(&self, tol: f64) -> bool {
        self.modes.iter().all(|m| {
            let w = m.frequency;
            let has = |z: Complex64| self.eigenvalues.iter().any(|e| (e - z).norm() < tol * w.norm().max(1.0));
            has(-w.conj()) && has(w.conj()) && has(-w)
        })
    }

    pub fn lowest(&self) -> Option<&BdGMode> {
        self.modes.first()
    }
}

fn max_growth_rate(eigs: &[Complex64]) -> f64 {
    eigs.iter()
        .filter(|w| w.norm() >= GOLDSTONE_TOL)
        .map(|w| w.im.abs())
        .fold(0.0, f64::max)
}

/// The real `2n x 2n` BdG matrix.
pub fn bdg_matrix(state: &StationaryState, v: &[f64]) -> Result<DMatrix<f64>> {
    let psi = &state.wavefunction;
    let grid = psi.grid();
    let n = grid.n_points();
    if v.len() != n {
        return Err(Error::GridMismatch);
    }
    if psi.values().iter().any(|c| c.im.abs() > 1e-10 * (1.0 + c.re.abs())) {
        return Err(Error::param("state", "BdG analysis expects a real stationary state"));
    }
    let g = state.coupling;
    let mu = state.chemical_potential;
    let row = grid.kinetic_row();
    let mut l = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        let rho = psi.values()[i].re * psi.values()[i].re;
        for j in 0..n {
            let t = row[(i + n - j) % n];
            l[(i, j)] = t;
            l[(n + i, n + j)] = -t;
        }
        let diag = v[i] - mu + 2.0 * g * rho;
        l[(i, i)] += diag;
        l[(n + i, n + i)] -= diag;
        l[(i, n + i)] = g * rho;
        l[(n + i, i)] = -g * rho;
    }
    Ok(l)
}

fn eigenvalues_of(l: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let dim = l.nrows();
    let schur = nalgebra::Schur::try_new(l, f64::EPSILON, 1000 * dim)
        .ok_or_else(|| Error::Eigen("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// All eigenvalues of the BdG operator, without eigenvectors.
pub fn bdg_eigenvalues(state: &StationaryState, v: &[f64]) -> Result<Vec<Complex64>> {
    eigenvalues_of(bdg_matrix(state, v)?)
}

/// Eigenvector of the real matrix `l` at (approximate) eigenvalue `w` by
/// complex inverse iteration.
fn eigenvector(l: &DMatrix<f64>, w: Complex64) -> Result<(DVector<Complex64>, f64)> {
    let dim = l.nrows();
    let scale = l.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let shift = w + Complex64::new(1e-10, 1e-10) * scale;
    let mut m = l.map(|x| Complex64::new(x, 0.0));
    for i in 0..dim {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    let mut x = DVector::from_fn(dim, |i, _| Complex64::new(1.0 + 0.01 * (i % 7) as f64, 0.003 * (i % 5) as f64));
    for _ in 0..4 {
        x = lu.solve(&x).ok_or_else(|| Error::Eigen("singular shifted BdG matrix".into()))?;
        let nrm = x.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Eigen("inverse iteration broke down".into()));
        }
        x /= Complex64::new(nrm, 0.0);
    }
    let lx = l.map(|x| Complex64::new(x, 0.0)) * &x;
    let rayleigh = x.dotc(&lx) / x.dotc(&x);
    let res = (&lx - &x * rayleigh).norm() / x.norm();
    Ok((x, res))
}

fn make_mode(x: &DVector<Complex64>, w: Complex64, residual: f64, dx: f64, n: usize) -> BdGMode {
    let mut u: Vec<Complex64> = x.rows(0, n).iter().cloned().collect();
    let mut v: Vec<Complex64> = x.rows(n, n).iter().cloned().collect();
    let uu: f64 = u.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx;
    let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx;
    let bog = uu - vv;
    let norm_sign = if bog.abs() < ZERO_NORM_TOL * (uu + vv) {
        0
    } else if bog > 0.0 {
        1
    } else {
        -1
    };
    // Fix the gauge at the largest |u| component.
    let umax = u
        .iter()
        .cloned()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if umax.norm() > 0.0 { umax.conj() / umax.norm() } else { Complex64::new(1.0, 0.0) };
    let scale = if norm_sign == 0 {
        1.0 / umax.norm().max(f64::MIN_POSITIVE)
    } else {
        1.0 / bog.abs().sqrt()
    };
    for c in u.iter_mut().chain(v.iter_mut()) {
        *c *= phase * scale;
    }
    BdGMode {
        frequency: w,
        u,
        v,
        norm_sign,
        residual,
    }
}

fn is_representative(w: Complex64) -> bool {
    let tol = AXIS_TOL * w.norm().max(1.0);
    w.re > tol || (w.re.abs() <= tol && w.im > 0.0)
}

/// The `n_modes` lowest representative modes plus the Goldstone mode.
pub fn bdg_spectrum(state: &StationaryState, v: &[f64], n_modes: usize) -> Result<BdgSpectrum> {
    let l = bdg_matrix(state, v)?;
    let grid = state.wavefunction.grid();
    let n = grid.n_points();
    let dx = grid.dx();
    let eigenvalues = eigenvalues_of(l.clone())?;

    let mut reps: Vec<Complex64> = eigenvalues
        .iter()
        .cloned()
        .filter(|w| w.norm() >= GOLDSTONE_TOL && is_representative(*w))
        .collect();
    reps.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)));
    // Degenerate representatives from round-off collapse to one.
    reps.dedup_by(|a, b| (*a - *b).norm() < 1e-9 * a.norm().max(1.0));
    reps.truncate(n_modes);

    let modes = reps
        .par_iter()
        .map(|&w| {
            let (x, res) = eigenvector(&l, w)?;
            Ok(make_mode(&x, w, res, dx, n))
        })
        .collect::<Result<Vec<_>>>()?;

    let phi: Vec<Complex64> = state.wavefunction.values().to_vec();
    let mut gx = DVector::<Complex64>::zeros(2 * n);
    for i in 0..n {
        gx[i] = phi[i];
        gx[n + i] = -phi[i];
    }
    let lg = l.map(|x| Complex64::new(x, 0.0)) * &gx;
    let g_res = lg.norm() / gx.norm();
    let w0 = eigenvalues
        .iter()
        .cloned()
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_default();
    let mut goldstone = make_mode(&gx, w0, g_res, dx, n);
    goldstone.norm_sign = 0;

    Ok(BdgSpectrum {
        goldstone,
        modes,
        eigenvalues,
    })
}

/// Largest growth rate of the antisymmetric state at separation `d`.
pub fn antisymmetric_growth_rate(grid: &Arc<Grid>, d: f64, g: f64, opts: &SolverOptions) -> Result<f64> {
    let state = double_well_state(grid, d, g, Parity::Odd, opts)?;
    let v = sample_double_well(grid, d);
    Ok(max_growth_rate(&bdg_eigenvalues(&state, &v)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSeparation {
    pub d_crit: f64,
    /// Bracket `[stable, unstable]` at termination.
    pub bracket: (f64, f64),
}

/// Onset of `Im omega > ONSET_THRESHOLD` for the antisymmetric state:
/// a coarse scan of `coarse` points across `d_range`, then bisection to `tol`.
pub fn critical_separation(
    grid: &Arc<Grid>,
    g: f64,
    d_range: (f64, f64),
    tol: f64,
    coarse: usize,
    opts: &SolverOptions,
) -> Result<CriticalSeparation> {
    let (lo, hi) = d_range;
    if !(hi > lo && lo >= 0.0 && tol > 0.0 && coarse >= 2) {
        return Err(Error::param("d_range", format!("[{lo}, {hi}] with tol {tol}")));
    }
    let ds: Vec<f64> = (0..coarse).map(|i| lo + (hi - lo) * i as f64 / (coarse - 1) as f64).collect();
    let rates = ds
        .par_iter()
        .map(|&d| antisymmetric_growth_rate(grid, d, g, opts))
        .collect::<Result<Vec<_>>>()?;
    let first = rates
        .iter()
        .position(|&r| r > ONSET_THRESHOLD)
        .ok_or(Error::NoOnset { lo, hi })?;
    if first == 0 {
        return Ok(CriticalSeparation {
            d_crit: lo,
            bracket: (lo, lo),
        });
    }
    let (mut a, mut b) = (ds[first - 1], ds[first]);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if antisymmetric_growth_rate(grid, m, g, opts)? > ONSET_THRESHOLD {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(CriticalSeparation {
        d_crit: 0.5 * (a + b),
        bracket: (a, b),
    })
}

/// Relative change of the lowest non-Goldstone `|omega|` when the grid is
/// refined by two at fixed box size.
pub fn refinement_change(grid: &Arc<Grid>, d: f64, g: f64, parity: Parity, opts: &SolverOptions) -> Result<f64> {
    let lowest = |grid: &Arc<Grid>| -> Result<f64> {
        let state = double_well_state(grid, d, g, parity, opts)?;
        let v = sample_double_well(grid, d);
        bdg_eigenvalues(&state, &v)?
            .into_iter()
            .map(|w| w.norm())
            .filter(|&a| a >= GOLDSTONE_TOL)
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::Eigen("no nonzero eigenvalue".into()))
    };
    let coarse = lowest(grid)?;
    let fine = lowest(&make_grid(2 * grid.n_points(), grid.half_width())?)?;
    Ok((fine - coarse).abs() / coarse)
}

/// Fails with the discretization-dependence flag above [`REFINEMENT_TOL`].
pub fn check_refinement(grid: &Arc<Grid>, d: f64, g: f64, parity: Parity, opts: &SolverOptions) -> Result<f64> {
    let change = refinement_change(grid, d, g, parity, opts)?;
    if change > REFINEMENT_TOL {
        return Err(Error::DiscretizationDependent {
            relative_change: change,
        });
    }
    Ok(change)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::ground_state;

    #[test]
    fn harmonic_linear_spectrum() {
        let grid = make_grid(128, 10.0).unwrap();
        let v = sample_double_well(&grid, 0.0);
        let s = ground_state(&grid, &v, 0.0, 1e-10).unwrap();
        let spec = bdg_spectrum(&s, &v, 4).unwrap();
        for (k, m) in spec.modes.iter().enumerate() {
            assert!((m.frequency.re - (k + 1) as f64).abs() < 1e-3, "{:?}", m.frequency);
            assert!(m.frequency.im.abs() < 1e-6);
            assert_eq!(m.norm_sign, 1);
            assert!(m.residual < 1e-6);
        }
        assert!(spec.goldstone.frequency.norm() < GOLDSTONE_TOL);
        assert!(spec.pairs_verified(1e-6));
    }

    #[test]
    fn kohn_mode_survives_interactions() {
        let grid = make_grid(128, 10.0).unwrap();
        let v = sample_double_well(&grid, 0.0);
        let s = ground_state(&grid, &v, 10.0, 1e-9).unwrap();
        let spec = bdg_spectrum(&s, &v, 3).unwrap();
        let w = spec.lowest().unwrap().frequency;
        assert!((w.re - 1.0).abs() < 1e-2, "{w}");
        assert!(spec.max_growth_rate() < 1e-6);
        assert!(spec.goldstone.frequency.norm() < GOLDSTONE_TOL);
        // Breathing mode near sqrt(3) in the Thomas-Fermi regime.
        let b = spec.modes[1].frequency.re;
        assert!(b > 1.5 && b < 2.0, "{b}");
    }
}
