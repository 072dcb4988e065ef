//! Second-order (Strang) split-operator stepping of the 1D GPE
//!
//! ```text
//! i dPhi/dt = [-1/2 d^2/dx^2 + V(x, t) + g |Phi|^2] Phi
//! ```
//!
//! One step is `exp(-i dt/2 W) exp(-i dt T) exp(-i dt/2 W)` with
//! `W = V + g|Phi|^2` taken from the instantaneous density and `T` applied
//! in Fourier space. Imaginary time substitutes `dt -> -i dt` and
//! renormalizes after every step. For a time-dependent trap both half-kicks
//! of a step use the potential at the step midpoint, which keeps the scheme
//! exactly time-reversible.
//!
//! In real time the kinetic phase `k^2 dt / 2` is capped at
//! `RESONANCE_CAP * pi`. Near-Nyquist modes past that cap would otherwise sit
//! on the splitting resonance at `pi`, where the nonlinearity amplifies them
//! into a growing energy error.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Fourier, Grid, WaveFunction};
use crate::potentials::{fill_double_well, imprint_phase, TrapProtocol};

/// Potential refresh threshold on `d(t)`.
const SEPARATION_CACHE_EPS: f64 = 1e-12;
/// Largest real-time kinetic phase per step, in units of `pi`.
pub const RESONANCE_CAP: f64 = 0.9;
/// Forced finiteness check interval, in steps.
const FINITE_CHECK_EVERY: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub mode: TimeMode,
    pub renormalize: bool,
}

impl StepperConfig {
    pub fn real(dt: f64) -> Self {
        StepperConfig {
            dt,
            mode: TimeMode::Real,
            renormalize: false,
        }
    }

    pub fn imaginary(dt: f64) -> Self {
        StepperConfig {
            dt,
            mode: TimeMode::Imaginary,
            renormalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("{} must be > 0", self.dt)));
        }
        Ok(())
    }

    fn renormalizes(&self) -> bool {
        self.renormalize || self.mode == TimeMode::Imaginary
    }
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig::real(1e-3)
    }
}

/// Owns the transform workspace for one run.
#[derive(Debug, Clone)]
pub struct SplitStepper {
    grid: Arc<Grid>,
    fourier: Fourier,
    scratch: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    cfg: StepperConfig,
    g: f64,
}

impl SplitStepper {
    pub fn new(grid: Arc<Grid>, g: f64, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        if !g.is_finite() {
            return Err(Error::param("g", "must be finite"));
        }
        let n = grid.n_points();
        let fourier = Fourier::new(n);
        let scratch = vec![Complex64::default(); fourier.scratch_len()];
        let inv_n = 1.0 / n as f64;
        let kinetic = grid
            .k_squared()
            .iter()
            .map(|&k2| {
                let e = 0.5 * k2 * cfg.dt;
                match cfg.mode {
                    TimeMode::Real => Complex64::from_polar(inv_n, -e.min(RESONANCE_CAP * PI)),
                    TimeMode::Imaginary => Complex64::new(inv_n * (-e).exp(), 0.0),
                }
            })
            .collect();
        Ok(SplitStepper {
            grid,
            fourier,
            scratch,
            kinetic,
            cfg,
            g,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn coupling(&self) -> f64 {
        self.g
    }

    /// Applies `exp(-i (weight_v * V + weight_g * g|psi|^2))` (real time) or
    /// its imaginary-time counterpart. `extra` is added to `V` with the same
    /// weight when present.
    fn kick(&self, psi: &mut [Complex64], v: &[f64], weight_v: f64, weight_g: f64, extra: Option<&[f64]>) {
        let g = self.g * weight_g;
        match (self.cfg.mode, extra) {
            (TimeMode::Real, None) => {
                for (c, &vi) in psi.iter_mut().zip(v) {
                    let phase = weight_v * vi + g * c.norm_sqr();
                    let (s, co) = phase.sin_cos();
                    *c *= Complex64::new(co, -s);
                }
            }
            (TimeMode::Real, Some(w)) => {
                for ((c, &vi), &wi) in psi.iter_mut().zip(v).zip(w) {
                    let phase = weight_v * (vi + wi) + g * c.norm_sqr();
                    let (s, co) = phase.sin_cos();
                    *c *= Complex64::new(co, -s);
                }
            }
            (TimeMode::Imaginary, extra) => {
                // The nonlinearity sees the normalized density.
                let norm_sqr = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx();
                let g = if norm_sqr > 0.0 { g / norm_sqr } else { g };
                for (i, (c, &vi)) in psi.iter_mut().zip(v).enumerate() {
                    let w = extra.map_or(0.0, |w| w[i]);
                    *c *= (-(weight_v * (vi + w) + g * c.norm_sqr())).exp();
                }
            }
        }
    }

    fn drift(&mut self, psi: &mut [Complex64]) {
        self.fourier.forward(psi, &mut self.scratch);
        for (c, k) in psi.iter_mut().zip(&self.kinetic) {
            *c *= k;
        }
        self.fourier.inverse(psi, &mut self.scratch);
    }

    /// One full Strang step in a fixed potential. Returns the norm before
    /// renormalization (imaginary time) or 1.
    pub fn step(&mut self, psi: &mut [Complex64], v: &[f64]) -> f64 {
        let h = 0.5 * self.cfg.dt;
        self.kick(psi, v, h, h, None);
        self.drift(psi);
        self.kick(psi, v, h, h, None);
        if self.cfg.renormalizes() {
            renormalize(psi, self.grid.dx())
        } else {
            1.0
        }
    }
}

fn renormalize(psi: &mut [Complex64], dx: f64) -> f64 {
    let norm = (psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx).sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        psi.iter_mut().for_each(|c| *c *= inv);
    }
    norm
}

/// Single step with a freshly built workspace.
pub fn step(psi: &WaveFunction, v: &[f64], g: f64, cfg: &StepperConfig) -> Result<WaveFunction> {
    if v.len() != psi.grid().n_points() {
        return Err(Error::GridMismatch);
    }
    let mut stepper = SplitStepper::new(psi.grid().clone(), g, *cfg)?;
    let mut values = psi.values().to_vec();
    stepper.step(&mut values, v);
    let out = WaveFunction::new(psi.grid().clone(), values)?;
    if !out.is_finite() {
        return Err(Error::NonFinite { step: 1, t: cfg.dt });
    }
    Ok(out)
}

/// State handed to observers.
pub struct Frame<'a> {
    pub step: u64,
    pub t: f64,
    pub psi: &'a WaveFunction,
    /// Trap potential at the most recent step midpoint, without noise.
    pub potential: &'a [f64],
    pub g: f64,
}

pub trait Observer {
    fn observe(&mut self, frame: &Frame<'_>);
}

impl<F: FnMut(&Frame<'_>)> Observer for F {
    fn observe(&mut self, frame: &Frame<'_>) {
        self(frame)
    }
}

/// Additive stochastic potential, one field per propagation step.
pub trait PotentialNoise {
    fn next_field(&mut self, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    Protocol(&'a TrapProtocol),
    Frozen(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct Evolved {
    pub psi: WaveFunction,
    pub steps: u64,
    pub t_end: f64,
    /// Last imaginary-time norm-decay estimate `-ln(norm)/dt`.
    pub mu_estimate: Option<f64>,
}

/// Options for [`evolve`]: observation stride in time units and an optional
/// noise source.
#[derive(Default)]
pub struct EvolveOptions<'a> {
    pub observe_every: Option<f64>,
    pub observers: Vec<&'a mut dyn Observer>,
    pub noise: Option<&'a mut dyn PotentialNoise>,
}

fn steps_in(span: f64, dt: f64) -> Option<u64> {
    let n = (span / dt).round();
    if n < 0.0 || (n * dt - span).abs() > 1e-9 * span.abs().max(1.0) {
        None
    } else {
        Some(n as u64)
    }
}

/// Time-ordered stepping of `psi0` over `t_range`. With a protocol drive the
/// potential is refreshed every step and the imprint is applied when the
/// run crosses `tau/2`.
pub fn evolve(
    psi0: &WaveFunction,
    drive: Drive<'_>,
    g: f64,
    t_range: (f64, f64),
    cfg: &StepperConfig,
    mut opts: EvolveOptions<'_>,
) -> Result<Evolved> {
    cfg.validate()?;
    let (t0, t1) = t_range;
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidTimeRange { start: t0, end: t1 });
    }
    let grid = psi0.grid().clone();
    let n = grid.n_points();
    let dt = cfg.dt;
    let n_steps = steps_in(t1 - t0, dt).ok_or(Error::InvalidTimeRange { start: t0, end: t1 })?;

    let mut imprint_step = None;
    if let Drive::Protocol(p) = drive {
        p.validate()?;
        if t0 < 0.0 || t1 > p.end_time() + 1e-9 {
            return Err(Error::InvalidTimeRange { start: t0, end: t1 });
        }
        let ti = p.imprint_time();
        if t0 < ti && ti <= t1 {
            let k = steps_in(ti - t0, dt).ok_or(Error::ImprintMisaligned { dt, t_imprint: ti })?;
            imprint_step = Some((k, p.theta));
        }
    }
    if let Drive::Frozen(v) = drive {
        if v.len() != n {
            return Err(Error::GridMismatch);
        }
    }

    let stride = match opts.observe_every {
        Some(s) if s > 0.0 => Some(((s / dt).round() as u64).max(1)),
        _ => None,
    };
    let fusable = cfg.mode == TimeMode::Real && !cfg.renormalizes();

    let mut stepper = SplitStepper::new(grid.clone(), g, *cfg)?;
    let mut psi = psi0.clone();
    let mut trap = match drive {
        Drive::Frozen(v) => v.to_vec(),
        Drive::Protocol(p) => {
            let mut v = vec![0.0; n];
            fill_double_well(&grid, p.separation(t0 + 0.5 * dt), &mut v);
            v
        }
    };
    let mut cached_d = match drive {
        Drive::Protocol(p) => p.separation(t0 + 0.5 * dt),
        Drive::Frozen(_) => 0.0,
    };
    let mut noise_cur = vec![0.0; n];
    let mut noise_prev = vec![0.0; n];
    let mut trap_prev = trap.clone();
    let mut pending = false;
    let mut mu_estimate = None;
    let h = 0.5 * dt;

    let observe = |psi: &WaveFunction, step: u64, t: f64, v: &[f64], obs: &mut Vec<&mut dyn Observer>| {
        let frame = Frame {
            step,
            t,
            psi,
            potential: v,
            g,
        };
        for o in obs.iter_mut() {
            o.observe(&frame);
        }
    };

    if stride.is_some() {
        observe(&psi, 0, t0, &trap, &mut opts.observers);
    }

    for k in 0..n_steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        if let Drive::Protocol(p) = drive {
            let d = p.separation(t_mid);
            if (d - cached_d).abs() >= SEPARATION_CACHE_EPS {
                fill_double_well(&grid, d, &mut trap);
                cached_d = d;
            }
        }
        let has_noise = opts.noise.is_some();
        if let Some(src) = opts.noise.as_deref_mut() {
            src.next_field(&mut noise_cur);
        }
        let noise_now = has_noise.then_some(noise_cur.as_slice());

        let values = psi.values_mut();
        if pending {
            // Closing half of the previous step fused with the opening half.
            fused_kick(&stepper, values, &trap_prev, &trap, has_noise.then_some((&noise_prev[..], &noise_cur[..])), h, dt);
        } else {
            stepper.kick(values, &trap, h, h, noise_now);
        }
        stepper.drift(values);

        let done = k + 1;
        let observe_now = stride.is_some_and(|s| done % s == 0) || done == n_steps;
        let imprint_now = imprint_step.is_some_and(|(ks, _)| ks == done);
        let check_now = done % FINITE_CHECK_EVERY == 0;

        if fusable && !(observe_now || imprint_now || check_now) {
            pending = true;
            std::mem::swap(&mut trap_prev, &mut trap);
            trap.copy_from_slice(&trap_prev);
            if has_noise {
                std::mem::swap(&mut noise_prev, &mut noise_cur);
            }
            continue;
        }
        pending = false;
        stepper.kick(values, &trap, h, h, noise_now);
        if cfg.renormalizes() {
            let norm = renormalize(values, grid.dx());
            if cfg.mode == TimeMode::Imaginary {
                mu_estimate = Some(-norm.ln() / dt);
            }
        }
        if check_now || observe_now || done == n_steps {
            if !psi.is_finite() {
                return Err(Error::NonFinite {
                    step: done,
                    t: t0 + done as f64 * dt,
                });
            }
        }
        if imprint_now {
            imprint_phase(&mut psi, imprint_step.unwrap().1);
        }
        if observe_now && stride.is_some() {
            observe(&psi, done, t0 + done as f64 * dt, &trap, &mut opts.observers);
        }
    }

    Ok(Evolved {
        psi,
        steps: n_steps,
        t_end: t0 + n_steps as f64 * dt,
        mu_estimate,
    })
}

fn fused_kick(
    stepper: &SplitStepper,
    psi: &mut [Complex64],
    v_prev: &[f64],
    v_cur: &[f64],
    noise: Option<(&[f64], &[f64])>,
    h: f64,
    dt: f64,
) {
    let g = stepper.g * dt;
    match noise {
        None => {
            for ((c, &a), &b) in psi.iter_mut().zip(v_prev).zip(v_cur) {
                let phase = h * (a + b) + g * c.norm_sqr();
                let (s, co) = phase.sin_cos();
                *c *= Complex64::new(co, -s);
            }
        }
        Some((na, nb)) => {
            for (i, c) in psi.iter_mut().enumerate() {
                let phase = h * (v_prev[i] + na[i] + v_cur[i] + nb[i]) + g * c.norm_sqr();
                let (s, co) = phase.sin_cos();
                *c *= Complex64::new(co, -s);
            }
        }
    }
}
