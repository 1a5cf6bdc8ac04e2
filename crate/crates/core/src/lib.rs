//! Locally stationary multivariate Hawkes processes: simulation, first- and
//! second-order moments, and localized B-spline least-squares estimation.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod splines;

pub use error::{Error, Result};
pub use estimate::{BoundaryMode, EstimatorConfig, SmoothingKernel};
pub use model::{Family, ModelConfig};
pub use scalar::Scalar;
pub use simulate::{Engine, RngStream};

pub type ModelSpec = model::ModelSpec<f64>;
pub type ModelSpecF32 = model::ModelSpec<f32>;
pub type Matrix = linalg::Matrix<f64>;
pub type SplineBasis = splines::SplineBasis<f64>;
pub type EventStream = simulate::EventStream<f64>;
pub type MomentTable = moments::MomentTable<f64>;
pub type DesignSystem = estimate::DesignSystem<f64>;
pub type FitResult = estimate::FitResult<f64>;
