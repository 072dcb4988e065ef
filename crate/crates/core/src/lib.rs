//! Simulation toolkit for a one-dimensional Bose-Einstein condensate
//! interferometer: split and recombine the condensate in a time-dependent
//! double well, imprint a relative phase, and read the phase out through
//! mode populations, the dipole oscillation, and the grey-soliton motion.
//!
//! All quantities use harmonic-oscillator units of the initial trap
//! (`hbar = m = Omega = 1`).

pub mod error;
pub mod grid;
pub mod potentials;
pub mod propagator;
pub mod stationary;
pub mod observables;
pub mod two_mode;
pub mod bdg;
pub mod noise;
pub mod config;
pub mod driver;

pub use error::{Error, Result};
