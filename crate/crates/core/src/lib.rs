//! Two-stage segmentation of images degraded by blur and Poisson noise.
//!
//! Stage one smooths the observation with an AITV-regularized Poisson model
//! solved by ADMM ([`solver::admm_smooth`]). Stage two thresholds the result
//! with k-means ([`segment::sat_pipeline`] for grayscale,
//! [`segment::slat_pipeline`] for color).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod degrade;
pub mod error;
pub mod exec;
pub mod grid;
pub mod metrics;
pub mod phantom;
pub mod prox;
pub mod segment;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{ImageGrid, VectorField};
pub use prox::{ProxParams, RegMode};
pub use solver::{admm_smooth, AdmmConfig, AdmmSolver, SmoothOutcome};
pub use spectral::{ConvKernel, KernelSpec};
