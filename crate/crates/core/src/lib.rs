//! Simulation and verification toolkit for additive nonparametric regression
//! and its Gaussian white-noise approximations.

pub mod basis;
pub mod chain;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod function;
pub mod gamma;
pub mod linalg;
pub mod quadrature;
pub mod scenario;
pub mod seed;
pub mod suites;
pub mod white_noise;

pub use error::{Error, Result};

/// Sizes the global worker pool; call once before any suite runs.
pub fn set_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))
}
