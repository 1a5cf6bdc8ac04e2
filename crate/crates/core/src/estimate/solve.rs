//! Regularized solve of `Delta theta = tau`.

use serde::Serialize;

use super::design::DesignSystem;
use crate::error::{Error, Result};
use crate::linalg::{norm2, symmetric_eigenvalues, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Ridge multipliers of `trace(Delta) / dim` tried when `Delta` is
/// numerically singular.
pub const RIDGE_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Relative eigenvalue floor below which the ladder kicks in.
const SINGULAR_FLOOR: f64 = 1e-10;
const REFINE_TOL: f64 = 1e-8;
const REFINE_STEPS: usize = 5;

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Solution<T> {
    pub theta: Vec<T>,
    pub ridge_used: T,
    /// `||tau - (Delta + ridge I) theta|| / ||tau||` after refinement.
    pub residual: T,
    pub min_eig: T,
    pub max_eig: T,
}

/// Solves `(Delta + ridge I) theta = tau` by Cholesky with iterative
/// refinement. If the smallest eigenvalue of `Delta + ridge I` is below
/// `1e-10 ||Delta||`, the ridge is raised along [`RIDGE_LADDER`].
pub fn solve_coefficients<T: Scalar>(design: &DesignSystem<T>, ridge: T) -> Result<Solution<T>> {
    let delta = &design.delta;
    let dim = delta.rows();
    let eig = symmetric_eigenvalues(delta);
    let min_eig = eig[0];
    let max_eig = *eig.last().unwrap();
    let norm = min_eig.abs().max(max_eig.abs());
    let floor = T::lit(SINGULAR_FLOOR) * norm;
    let singular = || Error::SingularDesign {
        min_eig: min_eig.as_f64(),
        max_eig: max_eig.as_f64(),
    };

    let mut ridge_used = ridge;
    if !(min_eig + ridge_used >= floor) || norm == T::zero() {
        let unit = delta.trace() / T::of_usize(dim);
        let rung = RIDGE_LADDER
            .iter()
            .map(|&c| ridge + T::lit(c) * unit)
            .find(|&r| min_eig + r >= floor && r > T::zero());
        ridge_used = rung.ok_or_else(singular)?;
    }

    let a = Matrix::from_fn(dim, dim, |i, j| {
        if i == j {
            delta[(i, j)] + ridge_used
        } else {
            delta[(i, j)]
        }
    });
    let chol = Cholesky::factor(&a).map_err(|_| singular())?;
    let tau = &design.tau;
    let tau_norm = norm2(tau);
    let mut theta = chol.solve(tau);
    let mut residual = T::zero();
    for _ in 0..REFINE_STEPS {
        let r: Vec<T> = a.mul_vec(&theta).iter().zip(tau).map(|(&v, &t)| t - v).collect();
        let rn = norm2(&r);
        residual = if tau_norm > T::zero() { rn / tau_norm } else { rn };
        if rn <= T::lit(REFINE_TOL) * tau_norm {
            break;
        }
        for (t, c) in theta.iter_mut().zip(chol.solve(&r)) {
            *t += c;
        }
    }
    Ok(Solution {
        theta,
        ridge_used,
        residual,
        min_eig,
        max_eig,
    })
}
