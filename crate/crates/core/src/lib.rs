//! Quasi-adiabatic simulation of a nano-electromechanical oscillator driven
//! by tunnelling electrons through a single-level quantum dot: electronic
//! coefficients, Langevin sampling, Wigner-function estimation, number-state
//! reconstruction and work extraction.

pub mod coefficients;
pub mod config;
pub mod electronic;
pub mod error;
pub mod io;
pub mod langevin;
pub mod params;
pub mod phase_space;
pub mod quadrature;
pub mod reconstruction;
pub mod sweep;
pub mod validate;
pub mod work;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use params::{DeviceParams, LeadSpec};
