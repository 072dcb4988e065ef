//! Two-mode reduction onto the symmetric and antisymmetric nonlinear
//! eigenstates of the double well.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::observables::TimeSeries;
use crate::potentials::TrapProtocol;
use crate::stationary::{double_well_state, Parity, SolverOptions, StationaryState};

/// Number of tabulated separations.
pub const TABLE_POINTS: usize = 64;
/// Largest tolerated `| |c0|^2 + |c1|^2 - 1 |`.
pub const NORM_DRIFT_BOUND: f64 = 1e-9;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeState {
    pub c0: Complex64,
    pub c1: Complex64,
    pub time: f64,
}

impl TwoModeState {
    pub fn ground() -> Self {
        TwoModeState {
            c0: Complex64::new(1.0, 0.0),
            c1: Complex64::new(0.0, 0.0),
            time: 0.0,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.c0.norm_sqr(), self.c1.norm_sqr())
    }

    /// `arg(c1/c0)`.
    pub fn relative_phase(&self) -> f64 {
        (self.c1 * self.c0.conj()).arg()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeData {
    pub d: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub o00: f64,
    pub o01: f64,
    pub o11: f64,
}

/// Overlaps `O_kl = int (phi_k phi_l)^2 dx` of two real stationary states.
pub fn overlaps(phi0: &StationaryState, phi1: &StationaryState) -> Result<(f64, f64, f64)> {
    let (a, b) = (&phi0.wavefunction, &phi1.wavefunction);
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let dx = a.grid().dx();
    let (mut o00, mut o01, mut o11) = (0.0, 0.0, 0.0);
    for (p, q) in a.values().iter().zip(b.values()) {
        let (r0, r1) = (p.norm_sqr(), q.norm_sqr());
        o00 += r0 * r0;
        o01 += r0 * r1;
        o11 += r1 * r1;
    }
    Ok((o00 * dx, o01 * dx, o11 * dx))
}

pub fn mode_data(grid: &Arc<Grid>, d: f64, g: f64, opts: &SolverOptions) -> Result<ModeData> {
    let s0 = double_well_state(grid, d, g, Parity::Even, opts)?;
    let s1 = double_well_state(grid, d, g, Parity::Odd, opts)?;
    let (o00, o01, o11) = overlaps(&s0, &s1)?;
    Ok(ModeData {
        d,
        mu0: s0.chemical_potential,
        mu1: s1.chemical_potential,
        o00,
        o01,
        o11,
    })
}

/// Natural cubic spline on an evenly spaced abscissa.
#[derive(Debug, Clone)]
struct Spline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives.
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut r = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let (diag, prev_c, prev_r) = if i == 0 { (4.0, 0.0, 0.0) } else { (4.0, c[i - 1], r[i - 1]) };
                let denom = diag - prev_c;
                c[i] = 1.0 / denom;
                r[i] = (rhs - prev_r) / denom;
            }
            m[k] = r[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = r[i] - c[i] * m[i + 2];
            }
        }
        Spline { x0, h, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        if n == 1 {
            return self.y[0];
        }
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (a, b) = (1.0 - t, t);
        let h2 = self.h * self.h;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h2 / 6.0
    }
}

/// [`ModeData`] tabulated over `[0, d_max]` and spline-interpolated.
#[derive(Debug, Clone)]
pub struct ModeTable {
    pub g: f64,
    pub entries: Vec<ModeData>,
    splines: [Spline; 5],
}

impl ModeTable {
    /// Tabulates `points` evenly spaced separations; entries are computed in parallel.
    pub fn build(grid: &Arc<Grid>, g: f64, d_max: f64, points: usize, opts: &SolverOptions) -> Result<Self> {
        if points < 2 || !(d_max > 0.0) {
            return Err(Error::param("mode table", format!("{points} points over [0, {d_max}]")));
        }
        let h = d_max / (points - 1) as f64;
        let entries = (0..points)
            .into_par_iter()
            .map(|i| mode_data(grid, i as f64 * h, g, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_entries(g, entries))
    }

    pub fn for_protocol(grid: &Arc<Grid>, g: f64, protocol: &TrapProtocol, opts: &SolverOptions) -> Result<Self> {
        Self::build(grid, g, (2.0 * protocol.a).max(1e-6), TABLE_POINTS, opts)
    }

    /// Entries must be evenly spaced in `d` starting from the first.
    pub fn from_entries(g: f64, entries: Vec<ModeData>) -> Self {
        let x0 = entries[0].d;
        let h = if entries.len() > 1 { entries[1].d - x0 } else { 1.0 };
        let col = |f: fn(&ModeData) -> f64| Spline::new(x0, h, entries.iter().map(f).collect());
        let splines = [
            col(|m| m.mu0),
            col(|m| m.mu1),
            col(|m| m.o00),
            col(|m| m.o01),
            col(|m| m.o11),
        ];
        ModeTable { g, entries, splines }
    }

    pub fn at(&self, d: f64) -> ModeData {
        let s = &self.splines;
        ModeData {
            d,
            mu0: s[0].eval(d),
            mu1: s[1].eval(d),
            o00: s[2].eval(d),
            o01: s[3].eval(d),
            o11: s[4].eval(d),
        }
    }
}

/// Relative phase `theta` between the half-spaces, acting on the
/// symmetric/antisymmetric amplitudes.
pub fn imprint_amplitudes(theta: f64, c: TwoModeState) -> TwoModeState {
    let (s, co) = (0.5 * theta).sin_cos();
    TwoModeState {
        c0: co * c.c0 + I * s * c.c1,
        c1: I * s * c.c0 + co * c.c1,
        time: c.time,
    }
}

fn rhs(m: &ModeData, g: f64, c0: Complex64, c1: Complex64) -> (Complex64, Complex64) {
    // Common phase from the mean chemical potential is dropped.
    let shift = 0.5 * (m.mu0 + m.mu1);
    let f = |mu: f64, okk: f64, ck: Complex64, co: Complex64| {
        let h = (mu - shift) * ck + g * (2.0 * m.o01 - okk) * co.norm_sqr() * ck + g * m.o01 * co * co * ck.conj();
        -I * h
    };
    (f(m.mu0, m.o00, c0, c1), f(m.mu1, m.o11, c1, c0))
}

#[derive(Debug, Clone)]
pub struct TwoModeRun {
    pub p0: TimeSeries,
    pub p1: TimeSeries,
    pub final_state: TwoModeState,
    pub max_norm_drift: f64,
}

/// RK4 integration over `[0, tau]` with the imprint at `tau/2`.
/// Populations are recorded every `observe_every` time units.
pub fn integrate_two_mode(
    c: TwoModeState,
    protocol: &TrapProtocol,
    table: &ModeTable,
    dt: f64,
    observe_every: f64,
) -> Result<TwoModeRun> {
    protocol.validate()?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("{dt} must be > 0")));
    }
    let g = table.g;
    let tau = protocol.tau;
    let n_steps = (tau / dt).round() as u64;
    let half = (0.5 * tau / dt).round() as u64;
    if (n_steps as f64 * dt - tau).abs() > 1e-9 * tau || (half as f64 * dt - 0.5 * tau).abs() > 1e-9 * tau {
        return Err(Error::ImprintMisaligned {
            dt,
            t_imprint: 0.5 * tau,
        });
    }
    let stride = ((observe_every / dt).round() as u64).max(1);
    let n0 = c.norm_sqr();
    let (mut c0, mut c1) = (c.c0, c.c1);
    let mut p0 = TimeSeries::empty("p0");
    let mut p1 = TimeSeries::empty("p1");
    let mut record = |t: f64, c0: Complex64, c1: Complex64| {
        let _ = p0.push(t, c0.norm_sqr());
        let _ = p1.push(t, c1.norm_sqr());
    };
    record(c.time, c0, c1);
    let mut max_drift: f64 = 0.0;
    for k in 0..n_steps {
        let t = c.time + k as f64 * dt;
        let m0 = table.at(protocol.separation(t));
        let mh = table.at(protocol.separation(t + 0.5 * dt));
        let m1 = table.at(protocol.separation(t + dt));
        let (k1a, k1b) = rhs(&m0, g, c0, c1);
        let (k2a, k2b) = rhs(&mh, g, c0 + 0.5 * dt * k1a, c1 + 0.5 * dt * k1b);
        let (k3a, k3b) = rhs(&mh, g, c0 + 0.5 * dt * k2a, c1 + 0.5 * dt * k2b);
        let (k4a, k4b) = rhs(&m1, g, c0 + dt * k3a, c1 + dt * k3b);
        c0 += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        c1 += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        let done = k + 1;
        if done == half {
            let s = imprint_amplitudes(protocol.theta, TwoModeState { c0, c1, time: 0.0 });
            c0 = s.c0;
            c1 = s.c1;
        }
        let drift = (c0.norm_sqr() + c1.norm_sqr() - n0).abs();
        max_drift = max_drift.max(drift);
        if !drift.is_finite() || drift > NORM_DRIFT_BOUND {
            return Err(Error::NormDrift { drift });
        }
        if done % stride == 0 || done == n_steps {
            record(c.time + done as f64 * dt, c0, c1);
        }
    }
    Ok(TwoModeRun {
        p0,
        p1,
        final_state: TwoModeState {
            c0,
            c1,
            time: c.time + n_steps as f64 * dt,
        },
        max_norm_drift: max_drift,
    })
}

/// Final `p0` for each `theta`, starting from the symmetric mode.
pub fn scan_two_mode(protocol: &TrapProtocol, table: &ModeTable, thetas: &[f64], dt: f64) -> Result<Vec<f64>> {
    thetas
        .par_iter()
        .map(|&theta| {
            let p = TrapProtocol::new(protocol.a, protocol.tau, theta, protocol.hold_time)?;
            let run = integrate_two_mode(TwoModeState::ground(), &p, table, dt, protocol.tau)?;
            Ok(run.final_state.c0.norm_sqr())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn flat_table(g: f64) -> ModeTable {
        let entries = (0..8)
            .map(|i| ModeData {
                d: i as f64,
                mu0: 0.5 + 0.1 * i as f64,
                mu1: 1.5 - 0.1 * i as f64,
                o00: 0.4,
                o01: 0.2,
                o11: 0.3,
            })
            .collect();
        ModeTable::from_entries(g, entries)
    }

    #[test]
    fn spline_reproduces_cubic_interior_and_nodes() {
        let y: Vec<f64> = (0..20).map(|i| (0.3 * i as f64).sin()).collect();
        let s = Spline::new(0.0, 0.3, y.clone());
        for (i, v) in y.iter().enumerate() {
            assert!((s.eval(0.3 * i as f64) - v).abs() < 1e-12);
        }
        assert!((s.eval(2.85) - 2.85f64.sin()).abs() < 1e-3);
    }

    #[test]
    fn imprint_map() {
        let c = TwoModeState::ground();
        assert_eq!(imprint_amplitudes(0.0, c), c);
        let s = imprint_amplitudes(PI, c);
        assert!(s.c0.norm() < 1e-15);
        assert!((s.c1 - I).norm() < 1e-15);
        let h = imprint_amplitudes(0.5 * PI, c);
        assert!((h.c0.norm_sqr() - 0.5).abs() < 1e-15);
        assert!((h.c1.norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pi_imprint_empties_symmetric_mode() {
        let table = flat_table(10.0);
        let p = TrapProtocol::new(2.0, 10.0, PI, 0.0).unwrap();
        let run = integrate_two_mode(TwoModeState::ground(), &p, &table, 1e-3, 0.1).unwrap();
        for (&t, &v) in run.p0.times().iter().zip(run.p0.values()) {
            if t > 5.0 {
                assert!(v < 1e-20, "{t}: {v}");
            }
        }
        assert!(run.max_norm_drift < 1e-9);
    }

    #[test]
    fn linear_populations_are_frozen_after_imprint() {
        let table = flat_table(0.0);
        let p = TrapProtocol::new(2.0, 10.0, 0.6 * PI, 0.0).unwrap();
        let run = integrate_two_mode(TwoModeState::ground(), &p, &table, 1e-3, 0.1).unwrap();
        let expected = (0.3 * PI).cos().powi(2);
        for (&t, &v) in run.p0.times().iter().zip(run.p0.values()) {
            if t > 5.0 {
                assert!((v - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_overlaps() {
        let grid = make_grid(256, 10.0).unwrap();
        let m = mode_data(&grid, 0.0, 0.0, &SolverOptions::default()).unwrap();
        let r = (2.0 * PI).sqrt();
        assert!((m.o00 - 1.0 / r).abs() < 1e-8);
        assert!((m.o11 - 0.75 / r).abs() < 1e-8);
        assert!((m.o01 - 0.5 / r).abs() < 1e-8);
        assert!((m.mu0 - 0.5).abs() < 1e-8 && (m.mu1 - 1.5).abs() < 1e-8);
    }
}
