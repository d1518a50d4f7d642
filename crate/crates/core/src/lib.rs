pub mod curves;
pub mod error;
pub mod fem;
pub mod inversion;
pub mod kle;
pub mod pipeline;
pub mod sensitivity;

pub use error::{Error, Result};

/// Vacuum permeability in H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;
