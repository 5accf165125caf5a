//! Stochastic particle-flow importance sampling for Gaussian mixtures.
//!
//! The library migrates Gaussian-mixture parameters through log-homotopy
//! flows (deterministic, Gromov, and optimized-diffusion stochastic), builds
//! flow-induced proposal densities for asymptotically optimal importance
//! sampling, and evaluates the methods on a 3-D TDOA multi-source
//! localization scenario with clutter and missed detections.

pub mod error;
pub mod flow;
pub mod gmm;
pub mod migrate;
pub mod schedule;
pub mod seed;

mod linalg;
#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use linalg::logsumexp;
