//! Desk-scale simulator and analysis pipeline for a two-ion test of the
//! isotropy of the electron dispersion relation.
//!
//! A pair of trapped ions prepared in a decoherence-free entangled state
//! turns an anisotropy of the bound-electron momentum distribution into an
//! oscillation-frequency modulation locked to the Earth's rotation. The
//! crates here provide the pieces needed to rehearse that experiment end to
//! end on synthetic data:
//!
//! - [`frames`]: Sun-frame tensor components to the lab-frame observable
//!   `C0^(2)(t)` and its harmonic decomposition;
//! - [`sensitivity`]: Wigner-Eckart angular factors and the matrix-element
//!   driven energy-shift coefficients, plus the photon-sector mapping;
//! - [`iondynamics`]: parity oscillation, fringe decay, projection noise;
//! - [`simulator`]: measurement blocks with a laser-phase servo, long/short
//!   Ramsey differencing, state alternation, drifting systematics;
//! - [`analysis`]: corrections, binning, the weighted sidereal fit,
//!   uncorrelated tensor combinations, Allan deviation;
//! - [`dataset`] / [`config`]: file formats and run configuration.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod frames;
pub mod iondynamics;
pub mod sensitivity;
pub mod simulator;
pub mod systematics;

pub use error::{Error, Result};
