//! Uniform periodic grid, complex fields on it, and the quadrature algebra.
//!
//! Lengths are in oscillator units `u_l = sqrt(hbar / (m Omega))`. The grid
//! covers `[-L, L)` with `x_i = -L + i dx`; the reflection `x -> -x` maps
//! index `i` to `(n - i) mod n`, so parity is an exact symmetry of the
//! discretization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Grid {
    n_points: usize,
    half_width: f64,
    dx: f64,
    x: Vec<f64>,
    wavenumbers: Vec<f64>,
    k_squared: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points && self.half_width == other.half_width
    }
}

impl Grid {
    pub fn new(n_points: usize, half_width: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points}, need at least 8"
            )));
        }
        if n_points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} is odd"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_width = {half_width} must be positive"
            )));
        }
        let dx = 2.0 * half_width / n_points as f64;
        let x = (0..n_points).map(|i| -half_width + i as f64 * dx).collect();
        let dk = std::f64::consts::PI / half_width;
        let half = n_points / 2;
        let mut wavenumbers = Vec::with_capacity(n_points);
        let mut k_squared = Vec::with_capacity(n_points);
        for m in 0..n_points {
            let signed = if m < half {
                m as f64
            } else {
                m as f64 - n_points as f64
            };
            let k = signed * dk;
            k_squared.push(k * k);
            // Nyquist has no sign; zero it for odd-order operators.
            wavenumbers.push(if m == half { 0.0 } else { k });
        }
        Ok(Grid {
            n_points,
            half_width,
            dx,
            x,
            wavenumbers,
            k_squared,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Spectral wavenumbers in FFT order, Nyquist entry set to zero.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// `k^2` in FFT order, with the full Nyquist magnitude.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Index of the mirror point `-x_i`.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        (self.n_points - i) % self.n_points
    }

    /// Index of `x = 0`.
    pub fn center(&self) -> usize {
        self.n_points / 2
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.x.iter().map(|&x| f(x)).collect()
    }

    /// First row of the circulant spectral matrix of `-1/2 d^2/dx^2`:
    /// `(T psi)_i = sum_j row[(i - j) mod n] psi_j`.
    pub fn kinetic_row(&self) -> Vec<f64> {
        let n = self.n_points;
        let mut buf: Vec<Complex64> = self
            .k_squared
            .iter()
            .map(|&k2| Complex64::new(0.5 * k2 / n as f64, 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_inverse(n).process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// FFT plans bound to one grid size. Cheap to clone; scratch is per call.
#[derive(Clone)]
pub struct Fourier {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Unnormalized inverse transform (caller divides by `n`).
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
    }
}

#[derive(Debug, Clone)]
pub struct WaveFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(WaveFunction { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: Arc<Grid>, f: F) -> Self {
        let values = grid.x().iter().map(|&x| f(x)).collect();
        WaveFunction { grid, values }
    }

    pub fn from_real<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn same_grid(&self, other: &WaveFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Scales to unit norm and returns the norm before scaling.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.values.iter_mut().for_each(|c| *c *= inv);
        }
        norm
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Phi(-x)` on the grid.
    pub fn reflected(&self) -> Self {
        let values = (0..self.values.len())
            .map(|i| self.values[self.grid.mirror(i)])
            .collect();
        WaveFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn conjugated(&self) -> Self {
        WaveFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Largest density at the two box edges relative to the peak density.
    pub fn boundary_ratio(&self) -> f64 {
        let density = self.density();
        let peak = density.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let n = density.len();
        let edge = density[0].max(density[1]).max(density[n - 1]);
        edge / peak
    }

    /// Confinement invariant: edge density below `1e-8` of the peak.
    pub fn is_confined(&self) -> bool {
        self.boundary_ratio() < 1e-8
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut body = String::from("x,re,im,density\n");
        for (x, c) in self.grid.x().iter().zip(&self.values) {
            body.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                x,
                c.re,
                c.im,
                c.norm_sqr()
            ));
        }
        out.write_all(body.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, grid: Arc<Grid>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::with_capacity(grid.n_points());
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}:{}: bad number `{s}`", path.display(), lineno + 1))
                })
            };
            if cols.len() < 3 {
                return Err(Error::Config(format!(
                    "{}:{}: expected x,re,im",
                    path.display(),
                    lineno + 1
                )));
            }
            values.push(Complex64::new(parse(cols[1])?, parse(cols[2])?));
        }
        WaveFunction::new(grid, values)
    }

    /// Binary dump: `u64` n_points, `f64` half_width, then `(re, im)` pairs,
    /// all little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + 16 * self.values.len());
        bytes.extend_from_slice(&(self.grid.n_points() as u64).to_le_bytes());
        bytes.extend_from_slice(&self.grid.half_width().to_le_bytes());
        for c in &self.values {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 * i..8 * i + 8)
                .map(|s| s.try_into().unwrap())
                .ok_or_else(|| Error::InvalidGrid(format!("{}: truncated field dump", path.display())))
        };
        let n = u64::from_le_bytes(word(0)?) as usize;
        let half_width = f64::from_le_bytes(word(1)?);
        let grid = Arc::new(Grid::new(n, half_width)?);
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let re = f64::from_le_bytes(word(2 + 2 * i)?);
            let im = f64::from_le_bytes(word(3 + 2 * i)?);
            values.push(Complex64::new(re, im));
        }
        WaveFunction::new(grid, values)
    }
}

pub fn make_grid(n_points: usize, half_width: f64) -> Result<Arc<Grid>> {
    Grid::new(n_points, half_width).map(Arc::new)
}

/// `sum_i conj(psi_i) phi_i dx`.
pub fn inner_product(psi: &WaveFunction, phi: &WaveFunction) -> Result<Complex64> {
    if !psi.same_grid(phi) {
        return Err(Error::GridMismatch);
    }
    let sum: Complex64 = psi
        .values
        .iter()
        .zip(&phi.values)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(sum * psi.grid.dx())
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &WaveFunction, b: &WaveFunction) -> Result<f64> {
    Ok(inner_product(a, b)?.norm_sqr())
}

/// `sum |Phi_k|^2` of the spectral representation, scaled to match `norm_sqr`.
pub fn spectral_norm_sqr(psi: &WaveFunction, fourier: &Fourier) -> f64 {
    let mut buf = psi.values.clone();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fourier.scratch_len()];
    fourier.forward(&mut buf, &mut scratch);
    let n = buf.len() as f64;
    buf.iter().map(|c| c.norm_sqr()).sum::<f64>() * psi.grid.dx() / n
}
