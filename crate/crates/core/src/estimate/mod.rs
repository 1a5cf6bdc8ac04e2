//! Localized B-spline least-squares estimation of one intensity row.
//!
//! With `z = (t - t0) / (T h)` and
//! `Phi_j(t) = sum_{u in (t - A, t)} psi_j(t - u)^T e_{m(u)}`, the candidate
//! intensity is `lambda#(t; theta) = sum_k z^k [theta_{0,k} + sum_j theta_{j,k} Phi_j(t)]`
//! and the estimator minimizes `rho(theta) = -2 tau^T theta + theta^T Delta theta`.

mod design;
mod fit;
mod solve;

pub use design::{assemble_design, assemble_stationary, features_at, DesignDiagnostics, DesignSystem};
pub use fit::{fit_local, fit_stationary, ise, FitResult, IseReport, ISE_PANELS};
pub use solve::{solve_coefficients, Solution, RIDGE_LADDER};

use serde::{Deserialize, Serialize};

use crate::splines::BasisParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKernel {
    #[default]
    Epanechnikov,
    Triangular,
    Uniform,
}

impl SmoothingKernel {
    /// Density on `[-1, 1]`.
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        if !(-1.0..=1.0).contains(&z) {
            return 0.0;
        }
        match self {
            SmoothingKernel::Epanechnikov => 0.75 * (1.0 - z * z),
            SmoothingKernel::Triangular => 1.0 - z.abs(),
            SmoothingKernel::Uniform => 0.5,
        }
    }

    /// `int_{-1}^{z} K`.
    pub fn cdf(self, z: f64) -> f64 {
        let z = z.clamp(-1.0, 1.0);
        match self {
            SmoothingKernel::Epanechnikov => 0.5 + 0.75 * (z - z * z * z / 3.0),
            SmoothingKernel::Triangular => {
                if z <= 0.0 {
                    0.5 * (1.0 + z) * (1.0 + z)
                } else {
                    1.0 - 0.5 * (1.0 - z) * (1.0 - z)
                }
            }
            SmoothingKernel::Uniform => 0.5 * (z + 1.0),
        }
    }
}

impl std::str::FromStr for SmoothingKernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "triangular" => Ok(Self::Triangular),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown smoothing kernel `{other}`")),
        }
    }
}

/// What to do when the localization window leaves the observed range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Reject windows that are not covered.
    #[default]
    Strict,
    /// Clip the window and renormalize the smoothing kernel over it.
    Truncate,
}

impl std::str::FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Self::Strict),
            "truncate" => Ok(Self::Truncate),
            other => Err(format!("unknown boundary mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Component whose intensity row is estimated (0-based).
    pub target: usize,
    pub x0: f64,
    pub h: f64,
    pub basis: BasisParams,
    pub k_order: usize,
    #[serde(default)]
    pub kernel: SmoothingKernel,
    /// Midpoint step in `t`; `None` means `min(T h, A) / (16 J_s)`.
    #[serde(default)]
    pub quad_step: Option<f64>,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

impl EstimatorConfig {
    pub fn new(target: usize, x0: f64, h: f64, basis: BasisParams) -> Self {
        Self {
            target,
            x0,
            h,
            basis,
            k_order: 1,
            kernel: SmoothingKernel::default(),
            quad_step: None,
            ridge: 0.0,
            boundary: BoundaryMode::default(),
        }
    }

    /// Size `(1 + J) K` of the coefficient vector.
    pub fn dim(&self) -> usize {
        (1 + self.basis.d * self.basis.js) * self.k_order
    }

    pub fn default_quad_step(&self, horizon: f64) -> f64 {
        (horizon * self.h).min(self.basis.support) / (16.0 * self.basis.js as f64)
    }
}
