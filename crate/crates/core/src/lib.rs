//! Numerical scattering theory for the wave equation outside a ball in R^3.

pub mod diagnostics;
pub mod error;
pub mod free;
pub mod grid;
pub mod quadrature;
pub mod radon;
pub mod sampler;
pub mod scattering;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
