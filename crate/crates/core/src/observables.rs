//! Measured quantities: mode populations, mean position, the grey-soliton
//! dip, the GPE energy, and amplitude/frequency extraction from time series.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{inner_product, Fourier, WaveFunction};
use crate::propagator::{Frame, Observer};
use crate::stationary::StationaryState;

/// Fraction of the Thomas-Fermi radius searched for a dip.
pub const DIP_REGION_FRACTION: f64 = 0.9;
/// Half-width of the window used to estimate the background around a dip.
const DIP_BACKGROUND_WINDOW: f64 = 2.0;
/// A local minimum counts as a dip only below this fraction of its background.
const DIP_CONTRAST: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub label: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries("times not strictly increasing".into()));
        }
        Ok(TimeSeries {
            label: label.into(),
            times,
            values,
        })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        TimeSeries {
            label: label.into(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_fn(label: impl Into<String>, times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(label, times, values)
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidSeries(format!("t = {t} after {last}")));
            }
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.times.last()?, *self.values.last()?))
    }

    /// Samples with `t >= t_start`.
    pub fn since(&self, t_start: f64) -> TimeSeries {
        let i = self.times.partition_point(|&t| t < t_start);
        TimeSeries {
            label: self.label.clone(),
            times: self.times[i..].to_vec(),
            values: self.values[i..].to_vec(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(48 * (self.len() + 1));
        out.push_str("t,");
        out.push_str(if self.label.is_empty() { "value" } else { &self.label });
        out.push('\n');
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:.16e},{v:.16e}\n"));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolitonTrack {
    /// Dip positions `q_t`.
    pub series: TimeSeries,
    /// Density at the dip.
    pub depth: TimeSeries,
    /// Set once the dip leaves the search region; no samples follow.
    pub lost: bool,
    pub lost_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Populations {
    pub p0: f64,
    pub p1: f64,
    /// Deficit `1 - p0 - p1`, clamped to `[0, 1]`.
    pub p_ex: f64,
}

/// `p_k = |<phi_k|Phi>|^2`.
pub fn populations(psi: &WaveFunction, phi0: &StationaryState, phi1: &StationaryState) -> Result<Populations> {
    let p0 = inner_product(&phi0.wavefunction, psi)?.norm_sqr();
    let p1 = inner_product(&phi1.wavefunction, psi)?.norm_sqr();
    Ok(Populations {
        p0,
        p1,
        p_ex: (1.0 - p0 - p1).clamp(0.0, 1.0),
    })
}

/// Density-weighted first moment.
pub fn mean_position(psi: &WaveFunction) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (c, &x) in psi.values().iter().zip(psi.grid().x()) {
        let rho = c.norm_sqr();
        num += rho * x;
        den += rho;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Chemical potential of the Thomas-Fermi profile in the harmonic trap.
pub fn thomas_fermi_mu(g: f64) -> f64 {
    (3.0 * g.max(0.0) / (4.0 * SQRT_2)).powf(2.0 / 3.0)
}

/// `sqrt(2 mu_TF)`.
pub fn thomas_fermi_radius(g: f64) -> f64 {
    (2.0 * thomas_fermi_mu(g)).sqrt()
}

/// Radius inside which dips are searched for at coupling `g`.
pub fn dip_search_radius(g: f64) -> f64 {
    DIP_REGION_FRACTION * thomas_fermi_radius(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub position: f64,
    pub density: f64,
}

/// Interior density minimum with `|x| < radius`, refined by a parabola
/// through its neighbours. With `previous`, the nearest candidate wins;
/// otherwise the deepest.
pub fn soliton_position(psi: &WaveFunction, previous: Option<f64>, radius: f64) -> Option<Dip> {
    let grid = psi.grid();
    let x = grid.x();
    let dx = grid.dx();
    let rho = psi.density();
    let n = rho.len();
    let window = (DIP_BACKGROUND_WINDOW / dx).ceil() as usize;

    let mut best: Option<(f64, Dip)> = None;
    for i in 1..n - 1 {
        if x[i].abs() >= radius {
            continue;
        }
        let (l, c, r) = (rho[i - 1], rho[i], rho[i + 1]);
        // Flat-bottom ties resolve to the leftmost point of the plateau.
        if !(c < l && c <= r) {
            continue;
        }
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(n - 1);
        let background = rho[lo..=hi].iter().cloned().fold(0.0, f64::max);
        if !(c < DIP_CONTRAST * background) {
            continue;
        }
        let curvature = l - 2.0 * c + r;
        let shift = if curvature > 0.0 {
            (0.5 * (l - r) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let position = x[i] + shift * dx;
        let density = c - 0.125 * (l - r) * (l - r) / curvature.max(f64::MIN_POSITIVE);
        let dip = Dip {
            position,
            density: density.max(0.0).min(c),
        };
        let score = match previous {
            Some(q) => (position - q).abs(),
            None => c,
        };
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, dip));
        }
    }
    best.map(|(_, d)| d)
}

/// `(max - min)/2` after discarding the first quarter of the window.
/// `period` is the expected oscillation period; the series must span 1.5 of them.
pub fn oscillation_amplitude(s: &TimeSeries, period: f64) -> Result<f64> {
    let required = 1.5 * period;
    let span = s.span();
    if s.len() < 2 || span < required {
        return Err(Error::WindowTooShort { span, required });
    }
    let start = s.times()[0] + 0.25 * span;
    let kept = s.since(start);
    let (lo, hi) = kept
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(0.5 * (hi - lo))
}

/// Mean spacing between successive upward crossings of the series mean.
pub fn crossing_period(s: &TimeSeries) -> Option<f64> {
    if s.len() < 3 {
        return None;
    }
    let mean = s.values().iter().sum::<f64>() / s.len() as f64;
    let mut ups = Vec::new();
    for i in 1..s.len() {
        let (a, b) = (s.values()[i - 1] - mean, s.values()[i] - mean);
        if a < 0.0 && b >= 0.0 {
            let (ta, tb) = (s.times()[i - 1], s.times()[i]);
            ups.push(ta + (tb - ta) * (-a) / (b - a));
        }
    }
    if ups.len() < 2 {
        return None;
    }
    Some((ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

fn fit_at(s: &TimeSeries, omega: f64) -> Option<SinusoidFit> {
    let mut m = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for (&t, &y) in s.times().iter().zip(s.values()) {
        let row = Vector3::new((omega * t).cos(), (omega * t).sin(), 1.0);
        m += row * row.transpose();
        b += row * y;
    }
    let coef = m.lu().solve(&b)?;
    let mut ss = 0.0;
    for (&t, &y) in s.times().iter().zip(s.values()) {
        let f = coef[0] * (omega * t).cos() + coef[1] * (omega * t).sin() + coef[2];
        ss += (y - f) * (y - f);
    }
    Some(SinusoidFit {
        omega,
        amplitude: coef[0].hypot(coef[1]),
        phase: (-coef[1]).atan2(coef[0]),
        offset: coef[2],
        rms_residual: (ss / s.len() as f64).sqrt(),
    })
}

/// Least-squares `A cos(omega t + phase) + offset` with `omega` searched in
/// `omega_range`: a coarse scan followed by golden-section refinement.
pub fn fit_sinusoid(s: &TimeSeries, omega_range: (f64, f64)) -> Result<SinusoidFit> {
    let (lo, hi) = omega_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::param("omega_range", format!("({lo}, {hi})")));
    }
    if s.len() < 4 {
        return Err(Error::InvalidSeries("too few samples for a sinusoid fit".into()));
    }
    let cost = |w: f64| fit_at(s, w).map_or(f64::INFINITY, |f| f.rms_residual);
    // Resolve a fraction of a cycle over the whole span.
    let coarse = ((hi - lo) * s.span() / (0.1 * PI)).ceil().clamp(16.0, 20_000.0) as usize;
    let step = (hi - lo) / coarse as f64;
    let (mut best_w, mut best_c) = (lo, f64::INFINITY);
    for i in 0..=coarse {
        let w = lo + i as f64 * step;
        let c = cost(w);
        if c < best_c {
            best_c = c;
            best_w = w;
        }
    }
    let (mut a, mut b) = ((best_w - step).max(lo), (best_w + step).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c1 = b - ratio * (b - a);
    let mut c2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (cost(c1), cost(c2));
    for _ in 0..80 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - ratio * (b - a);
            f1 = cost(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + ratio * (b - a);
            f2 = cost(c2);
        }
    }
    fit_at(s, 0.5 * (a + b)).ok_or_else(|| Error::InvalidSeries("degenerate sinusoid fit".into()))
}

/// Width at half the scan maximum of a dip centred at `center`. Crossings
/// are linearly interpolated; a missing side is mirrored from the other.
pub fn half_max_width(xs: &[f64], ys: &[f64], center: f64) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let half = 0.5 * ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c = xs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))?
        .0;
    if ys[c] >= half {
        return None;
    }
    let cross = |i: usize, j: usize| xs[i] + (xs[j] - xs[i]) * (half - ys[i]) / (ys[j] - ys[i]);
    let left = (1..=c).rev().find(|&i| ys[i - 1] >= half).map(|i| cross(i, i - 1));
    let right = (c..xs.len() - 1).find(|&i| ys[i + 1] >= half).map(|i| cross(i, i + 1));
    match (left, right) {
        (Some(l), Some(r)) => Some(r - l),
        (Some(l), None) => Some(2.0 * (center - l)),
        (None, Some(r)) => Some(2.0 * (r - center)),
        (None, None) => None,
    }
}

/// Spectral kinetic energy `sum k^2/2 |Phi_k|^2`, scaled to the grid measure.
pub fn kinetic_energy(psi: &WaveFunction, fourier: &Fourier) -> f64 {
    let grid = psi.grid();
    let mut buf = psi.values().to_vec();
    let mut scratch = vec![Complex64::default(); fourier.scratch_len()];
    fourier.forward(&mut buf, &mut scratch);
    let n = grid.n_points() as f64;
    buf.iter()
        .zip(grid.k_squared())
        .map(|(c, &k2)| 0.5 * k2 * c.norm_sqr())
        .sum::<f64>()
        * grid.dx()
        / n
}

/// `int [|Phi'|^2/2 + V|Phi|^2 + g|Phi|^4/2] dx`.
pub fn gpe_energy_with(psi: &WaveFunction, v: &[f64], g: f64, fourier: &Fourier) -> f64 {
    let local: f64 = psi
        .values()
        .iter()
        .zip(v)
        .map(|(c, &vi)| {
            let rho = c.norm_sqr();
            vi * rho + 0.5 * g * rho * rho
        })
        .sum();
    kinetic_energy(psi, fourier) + local * psi.grid().dx()
}

pub fn gpe_energy(psi: &WaveFunction, v: &[f64], g: f64) -> f64 {
    gpe_energy_with(psi, v, g, &Fourier::new(psi.grid().n_points()))
}

/// Records `f(frame)` as a time series.
pub struct SeriesRecorder<F> {
    pub series: TimeSeries,
    f: F,
}

impl<F: FnMut(&Frame<'_>) -> f64> SeriesRecorder<F> {
    pub fn new(label: impl Into<String>, f: F) -> Self {
        SeriesRecorder {
            series: TimeSeries::empty(label),
            f,
        }
    }
}

impl<F: FnMut(&Frame<'_>) -> f64> Observer for SeriesRecorder<F> {
    fn observe(&mut self, frame: &Frame<'_>) {
        let v = (self.f)(frame);
        // Frames arrive in time order; a repeated final frame is dropped.
        let _ = self.series.push(frame.t, v);
    }
}

pub fn mean_position_recorder() -> SeriesRecorder<impl FnMut(&Frame<'_>) -> f64> {
    SeriesRecorder::new("mean_x", |f: &Frame<'_>| mean_position(f.psi))
}

pub fn norm_recorder() -> SeriesRecorder<impl FnMut(&Frame<'_>) -> f64> {
    SeriesRecorder::new("norm", |f: &Frame<'_>| f.psi.norm_sqr())
}

/// Energy in the frame's trap potential (noise excluded).
pub fn energy_recorder(n_points: usize) -> SeriesRecorder<impl FnMut(&Frame<'_>) -> f64> {
    let fourier = Fourier::new(n_points);
    SeriesRecorder::new("energy", move |f: &Frame<'_>| gpe_energy_with(f.psi, f.potential, f.g, &fourier))
}

/// Follows the dip from `start` onward with continuity tracking.
#[derive(Debug, Clone)]
pub struct SolitonTracker {
    pub track: SolitonTrack,
    start: f64,
    radius: f64,
    previous: Option<f64>,
}

impl SolitonTracker {
    pub fn new(start: f64, radius: f64) -> Self {
        SolitonTracker {
            track: SolitonTrack {
                series: TimeSeries::empty("q"),
                depth: TimeSeries::empty("dip_density"),
                lost: false,
                lost_at: None,
            },
            start,
            radius,
            previous: None,
        }
    }

    pub fn into_track(self) -> SolitonTrack {
        self.track
    }
}

impl Observer for SolitonTracker {
    fn observe(&mut self, frame: &Frame<'_>) {
        if self.track.lost || frame.t < self.start - 1e-12 {
            return;
        }
        match soliton_position(frame.psi, self.previous, self.radius) {
            Some(dip) => {
                if self.track.series.push(frame.t, dip.position).is_ok() {
                    let _ = self.track.depth.push(frame.t, dip.density);
                }
                self.previous = Some(dip.position);
            }
            None => {
                self.track.lost = true;
                self.track.lost_at = Some(frame.t);
            }
        }
    }
}
