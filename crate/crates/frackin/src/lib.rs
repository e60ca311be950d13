//! Simulation and verification suite for the fractional diffusion limit of
//! a run-and-tumble kinetic model with a noisy internal pathway.
//!
//! The crate solves the scaled kinetic equation on a phase grid, simulates
//! the underlying velocity-jump particle process, solves the limiting
//! fractional heat equation spectrally, computes the limit diffusivity from
//! first principles, and checks the a priori estimates numerically.

pub mod coefficients;
pub mod error;
pub mod fractional;
pub mod grid;
pub mod integrals;
pub mod kinetic;
pub mod particles;
pub mod quad;

pub use error::{FrackinError, Result};
