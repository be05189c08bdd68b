//! High-temperature hierarchical equations of motion (HEOM) for excitonic
//! energy transfer, together with trace-distance measures of the information
//! exchanged between the exciton and its phonon bath.

pub mod config;
pub mod error;
pub mod files;
pub mod hierarchy;
pub mod integrator;
pub mod linalg;
pub mod measures;
pub mod propagator;
pub mod scan;
pub mod units;

pub use error::{Error, Result};
