//! Simulation of a two-pulse microwave controlled-phase gate between two
//! trapped polar molecules coupled by a resonant dipole-dipole exchange.
//!
//! The internal tier evolves the nine-state spin space; the composite tier
//! adds the relative motional mode, whose position modulates the coupling.
//! Units: hbar = 1, times in units of the pulse duration T.

pub mod adiabatic;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fidelity;
pub mod linalg;
pub mod model;
pub mod motion;
pub mod propagator;
pub mod quadrature;

pub use error::{Error, Result};
