//! Numerical toolkit for the quantum Rabi-Stark model: Hamiltonians on a
//! truncated qubit ⊗ Fock space, perturbative k-photon analytics, unitary
//! and dissipative dynamics, a trapped-ion realization and reference
//! experiment protocols.

pub mod dynamics;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod models;
pub mod qspace;
mod sparse;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
