//! Fluctuating potential, white in time with Lorentzian spatial correlation
//! `C(s) = l^2 / (s^2 + l^2)`, and ensemble statistics of the populations.
//!
//! A time slice is `sqrt(2 gamma / dt) * (h * xi)` where `xi` is spatial white
//! noise and `h` is the convolution root of `C`, applied spectrally with
//! weights `sqrt(pi l exp(-l |k|) / dx)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{Fourier, Grid};
use crate::observables::Populations;
use crate::propagator::PotentialNoise;

pub const DEFAULT_CORR_LENGTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Scattering rate `gamma`; the correlator amplitude is `2 gamma`.
    pub gamma: f64,
    pub corr_length: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(gamma: f64, corr_length: f64, seed: u64) -> Result<Self> {
        let s = NoiseSpec {
            gamma,
            corr_length,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::param("gamma", format!("{} must be >= 0", self.gamma)));
        }
        if !(self.corr_length > 0.0) || !self.corr_length.is_finite() {
            return Err(Error::param(
                "corr_length",
                format!("{} must be > 0", self.corr_length),
            ));
        }
        Ok(())
    }

    /// Seed of realization `index`.
    pub fn stream_seed(&self, index: u64) -> u64 {
        self.seed ^ splitmix64(index)
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E4B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Spectral filter producing correlated slices on one grid.
#[derive(Clone)]
pub struct NoiseField {
    grid: Arc<Grid>,
    fourier: Fourier,
    /// `sqrt(lambda_k) * amplitude / n`.
    filter: Vec<f64>,
    amplitude: f64,
}

impl NoiseField {
    pub fn new(grid: Arc<Grid>, spec: &NoiseSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0) {
            return Err(Error::param("dt", format!("{dt} must be > 0")));
        }
        let dx = grid.dx();
        if !(spec.corr_length > 2.0 * dx) {
            return Err(Error::UnresolvedCorrelation {
                corr_length: spec.corr_length,
                dx,
            });
        }
        let n = grid.n_points();
        let amplitude = (2.0 * spec.gamma / dt).sqrt();
        let l = spec.corr_length;
        let filter = grid
            .k_squared()
            .iter()
            .map(|&k2| (PI * l * (-l * k2.sqrt()).exp() / dx).sqrt() * amplitude / n as f64)
            .collect();
        Ok(NoiseField {
            fourier: Fourier::new(n),
            grid,
            filter,
            amplitude,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Two independent slices from one complex transform.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R, a: &mut [f64], b: &mut [f64]) {
        if self.amplitude == 0.0 {
            a.fill(0.0);
            b.fill(0.0);
            return;
        }
        let mut buf: Vec<Complex64> = (0..self.filter.len())
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let mut scratch = vec![Complex64::default(); self.fourier.scratch_len()];
        self.fourier.forward(&mut buf, &mut scratch);
        for (c, &w) in buf.iter_mut().zip(&self.filter) {
            *c *= w;
        }
        self.fourier.inverse(&mut buf, &mut scratch);
        for ((c, x), y) in buf.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
            *x = c.re;
            *y = c.im;
        }
    }
}

/// One slice of the noise potential.
pub fn sample_noise_field<R: Rng + ?Sized>(grid: &Arc<Grid>, spec: &NoiseSpec, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    let field = NoiseField::new(grid.clone(), spec, dt)?;
    let n = grid.n_points();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    field.sample_pair(rng, &mut a, &mut b);
    Ok(a)
}

/// Per-step noise stream for the propagator.
pub struct NoiseSource {
    field: NoiseField,
    rng: ChaCha8Rng,
    spare: Vec<f64>,
    has_spare: bool,
}

impl NoiseSource {
    pub fn new(grid: Arc<Grid>, spec: &NoiseSpec, dt: f64, stream: u64) -> Result<Self> {
        let n = grid.n_points();
        Ok(NoiseSource {
            field: NoiseField::new(grid, spec, dt)?,
            rng: ChaCha8Rng::seed_from_u64(spec.stream_seed(stream)),
            spare: vec![0.0; n],
            has_spare: false,
        })
    }
}

impl PotentialNoise for NoiseSource {
    fn next_field(&mut self, out: &mut [f64]) {
        if self.has_spare {
            out.copy_from_slice(&self.spare);
            self.has_spare = false;
        } else {
            self.field.sample_pair(&mut self.rng, out, &mut self.spare);
            self.has_spare = true;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub theta: f64,
    pub gamma: f64,
    pub n_realizations: usize,
    pub mean_p0: f64,
    pub mean_p1: f64,
    pub mean_pex: f64,
    pub stderr_p0: f64,
    pub stderr_p1: f64,
    pub stderr_pex: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Means and standard errors, reduced in sample order.
pub fn summarize(theta: f64, gamma: f64, samples: &[Populations]) -> Result<EnsembleResult> {
    if samples.len() < 2 {
        return Err(Error::param("n_realizations", "at least 2 required"));
    }
    let col = |f: fn(&Populations) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let (mean_p0, stderr_p0) = mean_stderr(&col(|p| p.p0));
    let (mean_p1, stderr_p1) = mean_stderr(&col(|p| p.p1));
    let (mean_pex, stderr_pex) = mean_stderr(&col(|p| p.p_ex));
    Ok(EnsembleResult {
        theta,
        gamma,
        n_realizations: samples.len(),
        mean_p0,
        mean_p1,
        mean_pex,
        stderr_p0,
        stderr_p1,
        stderr_pex,
    })
}
