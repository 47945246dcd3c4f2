//! Finite-temperature non-Markovian dynamics and spin squeezing of the
//! isotropic Lipkin-Meshkov-Glick model.

pub mod band;
pub mod bath;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod harness;
pub mod master;
pub mod observables;
pub mod spin;
pub mod trajectory;

pub use error::{Error, Result};
