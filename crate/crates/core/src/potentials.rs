//! Double-well trap family, the splitting schedule, the phase imprint, and
//! the reduction of 3D parameters to the 1D coupling `g`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction};

/// Confinement-induced resonance coefficient.
const CIR_COEFFICIENT: f64 = 1.4603;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapProtocol {
    /// Quarter of the maximum splitting; minima sit at `±2a` at `tau/2`.
    pub a: f64,
    pub tau: f64,
    /// Relative phase imprinted on `x > 0` at `tau/2`.
    pub theta: f64,
    pub hold_time: f64,
}

impl TrapProtocol {
    pub fn new(a: f64, tau: f64, theta: f64, hold_time: f64) -> Result<Self> {
        let p = TrapProtocol {
            a,
            tau,
            theta: theta.rem_euclid(TAU),
            hold_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(Error::param("a", format!("{} must be >= 0", self.a)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("{} must be > 0", self.tau)));
        }
        if !(self.hold_time >= 0.0) || !self.hold_time.is_finite() {
            return Err(Error::param(
                "hold_time",
                format!("{} must be >= 0", self.hold_time),
            ));
        }
        if !(0.0..TAU).contains(&self.theta) {
            return Err(Error::param(
                "theta",
                format!("{} outside [0, 2pi)", self.theta),
            ));
        }
        Ok(())
    }

    pub fn imprint_time(&self) -> f64 {
        0.5 * self.tau
    }

    pub fn end_time(&self) -> f64 {
        self.tau + self.hold_time
    }

    pub fn separation(&self, t: f64) -> f64 {
        separation(t, self)
    }
}

/// `d(t) = 2a sin^2(pi t / tau)` on `[0, tau]`, zero outside.
pub fn separation(t: f64, protocol: &TrapProtocol) -> f64 {
    if t <= 0.0 || t >= protocol.tau {
        return 0.0;
    }
    let s = (PI * t / protocol.tau).sin();
    2.0 * protocol.a * s * s
}

/// `V = (x^2 - d^2)^2 / (2 (x^2 + d^2))`; harmonic `x^2/2` at `d = 0`.
pub fn double_well(x: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.5 * x * x;
    }
    let x2 = x * x;
    let d2 = d * d;
    let diff = x2 - d2;
    0.5 * diff * diff / (x2 + d2)
}

pub fn sample_double_well(grid: &Grid, d: f64) -> Vec<f64> {
    grid.sample(|x| double_well(x, d))
}

pub fn fill_double_well(grid: &Grid, d: f64, out: &mut [f64]) {
    for (v, &x) in out.iter_mut().zip(grid.x()) {
        *v = double_well(x, d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub n_atoms: f64,
    /// `a_s / u_l`
    pub scattering_length_ratio: f64,
    /// `Omega_perp / Omega`
    pub trap_ratio: f64,
    /// `a_s / u_perp`
    pub transverse_ratio: f64,
}

/// `g = 2 N (a_s/u_l)(Omega_perp/Omega) / (1 - 1.4603 a_s/u_perp)`.
pub fn effective_g(p: &PhysicalParams) -> Result<f64> {
    if !(p.n_atoms > 0.0) {
        return Err(Error::param("n_atoms", format!("{} must be > 0", p.n_atoms)));
    }
    if !(p.scattering_length_ratio >= 0.0) {
        return Err(Error::param(
            "scattering_length_ratio",
            format!("{} must be >= 0", p.scattering_length_ratio),
        ));
    }
    if !(p.trap_ratio > 0.0) {
        return Err(Error::param(
            "trap_ratio",
            format!("{} must be > 0", p.trap_ratio),
        ));
    }
    if !(p.transverse_ratio >= 0.0) {
        return Err(Error::param(
            "transverse_ratio",
            format!("{} must be >= 0", p.transverse_ratio),
        ));
    }
    let shift = CIR_COEFFICIENT * p.transverse_ratio;
    if shift >= 1.0 {
        return Err(Error::ConfinementResonance(shift));
    }
    Ok(2.0 * p.n_atoms * p.scattering_length_ratio * p.trap_ratio / (1.0 - shift))
}

/// Multiplies `x > 0` by `e^{i theta}`; the `x = 0` point gets `e^{i theta/2}`.
pub fn imprint_phase(psi: &mut WaveFunction, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let full = Complex64::from_polar(1.0, theta);
    let half = Complex64::from_polar(1.0, 0.5 * theta);
    let grid = psi.grid().clone();
    for (c, &x) in psi.values_mut().iter_mut().zip(grid.x()) {
        if x > 0.0 {
            *c *= full;
        } else if x == 0.0 {
            *c *= half;
        }
    }
}
