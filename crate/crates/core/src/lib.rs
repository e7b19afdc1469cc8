//! Monte Carlo simulation and statistical analysis of a cavity-enhanced
//! spinwave–photon polarization-entanglement source.

pub mod analysis;
pub mod cavity;
pub mod error;
pub mod eventlog;
pub mod montecarlo;
pub mod quantum_state;
pub mod scenario;

pub use error::{Error, Result};
