//! Simulator and bounds checker for secure quantum ranging with
//! frequency-entangled NOON probes.
//!
//! Units: `c = 1`; every formula is the narrow-regulator limit, so time and
//! the verifier separation never appear.

pub mod attack;
pub mod detection;
pub mod error;
pub mod kernels;
pub mod metrology;
pub mod model;
pub mod oracle;
pub mod quadrature;

pub use error::{Error, Result};
pub use model::{Complex, Ensemble, Geometry, Mat2, ProbeSpec, Unitary2};
