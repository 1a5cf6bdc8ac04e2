//! Equidistant-knot B-spline basis for `R^d`-valued functions on `[0, A]`.
//!
//! The scalar basis of order `k` uses the uniform knot sequence
//! `t_r = (r - k + 1) delta`, `delta = A / (J_s - k + 1)`, so that `J_s`
//! splines restricted to `[0, A]` form a partition of unity there. Each
//! scalar spline is divided by its `L^2[0, A]` norm.
//!
//! The vector basis has `J = d J_s` elements:
//! `psi_{m J_s + i}(u) = e_m b_i(u) / ||b_i||` (0-based `m`, `i`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Cholesky, Matrix};
use crate::model::ModelSpec;
use crate::quadrature::{gauss_legendre, gauss_on};
use crate::scalar::Scalar;

/// Serializable basis parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisParams {
    #[serde(rename = "A")]
    pub support: f64,
    pub order: usize,
    pub js: usize,
    pub d: usize,
}

#[derive(Clone, Debug)]
pub struct SplineBasis<T> {
    support: T,
    order: usize,
    js: usize,
    d: usize,
    delta: T,
    norms: Vec<T>,
}

impl<T: Scalar> SplineBasis<T> {
    pub fn new(support: T, order: usize, js: usize, d: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidBasis("order must be at least 1".into()));
        }
        if js < order {
            return Err(Error::InvalidBasis(format!(
                "J_s = {js} is smaller than the order {order}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidBasis("d must be positive".into()));
        }
        if !(support > T::zero() && support.is_finite()) {
            return Err(Error::InvalidBasis("support must be positive".into()));
        }
        let delta = support / T::of_usize(js - order + 1);
        let mut basis = Self {
            support,
            order,
            js,
            d,
            delta,
            norms: vec![T::one(); js],
        };
        let raw = basis.raw_scalar_gram();
        basis.norms = (0..js).map(|i| raw[(i, i)].sqrt()).collect();
        Ok(basis)
    }

    pub fn from_params(p: &BasisParams) -> Result<Self> {
        Self::new(T::lit(p.support), p.order, p.js, p.d)
    }

    pub fn params(&self) -> BasisParams {
        BasisParams {
            support: self.support.as_f64(),
            order: self.order,
            js: self.js,
            d: self.d,
        }
    }

    pub fn support(&self) -> T {
        self.support
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of scalar splines `J_s`.
    pub fn scalar_len(&self) -> usize {
        self.js
    }

    pub fn components(&self) -> usize {
        self.d
    }

    /// Size `J = d J_s` of the vector basis.
    pub fn len(&self) -> usize {
        self.d * self.js
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knot_spacing(&self) -> T {
        self.delta
    }

    /// Knot `t_r` of the extended sequence, `r = 0..J_s + order`.
    pub fn knot(&self, r: usize) -> T {
        (T::of_usize(r) - T::of_usize(self.order - 1)) * self.delta
    }

    pub fn spans(&self) -> usize {
        self.js - self.order + 1
    }

    pub fn norm_factors(&self) -> &[T] {
        &self.norms
    }

    /// Span `q` with `u in [q delta, (q + 1) delta)`; `u = A` belongs to the
    /// last span. `None` outside `[0, A]`.
    #[inline]
    fn span(&self, u: T) -> Option<usize> {
        if !(u >= T::zero() && u <= self.support) {
            return None;
        }
        let q = (u / self.delta).floor().to_usize().unwrap_or(0);
        Some(q.min(self.spans() - 1))
    }

    /// Unnormalized values of the `order` splines that are nonzero at `u`
    /// (Cox-de Boor triangle). Returns the index of the first one.
    fn raw_nonzero(&self, u: T, out: &mut [T]) -> Option<usize> {
        let q = self.span(u)?;
        let p = self.order - 1;
        let mu = q + p;
        let mut left = [T::zero(); 32];
        let mut right = [T::zero(); 32];
        assert!(self.order <= 32, "spline order above 32 is not supported");
        out[0] = T::one();
        for j in 1..=p {
            left[j] = u - self.knot(mu + 1 - j);
            right[j] = self.knot(mu + j) - u;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        Some(q)
    }

    /// Normalized values of the `order` scalar splines that are nonzero at
    /// `u`, written to `out[..order]`. Returns the index of the first one,
    /// or `None` when `u` is outside `[0, A]`.
    #[inline]
    pub fn nonzero(&self, u: T, out: &mut [T]) -> Option<usize> {
        let first = self.raw_nonzero(u, out)?;
        for r in 0..self.order {
            out[r] /= self.norms[first + r];
        }
        Some(first)
    }

    /// Unnormalized scalar spline `b_i(u)`; 0 outside `[0, A]`.
    pub fn eval_raw(&self, i: usize, u: T) -> T {
        let mut buf = [T::zero(); 32];
        match self.raw_nonzero(u, &mut buf) {
            Some(first) if i >= first && i < first + self.order => buf[i - first],
            _ => T::zero(),
        }
    }

    /// Normalized scalar spline `b_i(u) / ||b_i||` (0-based `i`).
    pub fn eval_scalar(&self, i: usize, u: T) -> T {
        self.eval_raw(i, u) / self.norms[i]
    }

    /// Component `m` of the vector basis function `psi_j(u)`.
    pub fn eval(&self, j: usize, m: usize, u: T) -> T {
        if j / self.js != m {
            return T::zero();
        }
        self.eval_scalar(j % self.js, u)
    }

    /// `sum_j coeffs[j] psi_j(u)` restricted to component `m`.
    pub fn combine(&self, coeffs: &[T], m: usize, u: T) -> T {
        debug_assert_eq!(coeffs.len(), self.len());
        let mut buf = [T::zero(); 32];
        match self.nonzero(u, &mut buf) {
            Some(first) => (0..self.order)
                .map(|r| coeffs[m * self.js + first + r] * buf[r])
                .sum(),
            None => T::zero(),
        }
    }

    fn span_rule(&self) -> (Vec<T>, Vec<T>) {
        gauss_legendre(self.order + 1)
    }

    fn raw_scalar_gram(&self) -> Matrix<T> {
        let rule = self.span_rule();
        let k = self.order;
        let mut g = Matrix::zeros(self.js, self.js);
        for q in 0..self.spans() {
            let a = self.delta * T::of_usize(q);
            let b = a + self.delta;
            for (ia, ib) in (0..k).flat_map(|ia| (0..k).map(move |ib| (ia, ib))) {
                let v = gauss_on(
                    |u| {
                        let mut buf = [T::zero(); 32];
                        self.raw_nonzero(u, &mut buf);
                        buf[ia] * buf[ib]
                    },
                    a,
                    b,
                    &rule,
                );
                g[(q + ia, q + ib)] += v;
            }
        }
        g
    }

    /// `int_0^A b_i b_j / (||b_i|| ||b_j||)` for the scalar splines.
    pub fn scalar_gram(&self) -> Matrix<T> {
        let raw = self.raw_scalar_gram();
        Matrix::from_fn(self.js, self.js, |i, j| {
            if i == j {
                T::one()
            } else {
                raw[(i, j)] / (self.norms[i] * self.norms[j])
            }
        })
    }

    /// `G_{jk} = int_0^A psi_j^T psi_k du`; block diagonal across components.
    pub fn gram(&self) -> Matrix<T> {
        let s = self.scalar_gram();
        let n = self.len();
        Matrix::from_fn(n, n, |a, b| {
            if a / self.js == b / self.js {
                s[(a % self.js, b % self.js)]
            } else {
                T::zero()
            }
        })
    }
}

/// Grid sizes used by [`project_truth`].
pub const PROJECTION_U_POINTS: usize = 801;
pub const PROJECTION_X_POINTS: usize = 201;

/// Best tensor-grid approximation of a model row in the estimator's
/// coefficient layout.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Projection<T> {
    /// Coefficients indexed `j * K + k`: `j = 0` is the baseline, `j >= 1`
    /// the vector spline `psi_{j-1}`; `k` is the power of `z = (x - x0) / h`.
    pub theta: Vec<T>,
    /// Sup-norm residual over the fitting grid.
    pub eps: T,
    pub condition: T,
    pub target: usize,
    pub k_order: usize,
}

impl<T: Scalar> Projection<T> {
    /// Baseline coefficient `theta_{0,0}`, the fitted `nu(x0)`.
    pub fn nu_star(&self) -> T {
        self.theta[0]
    }

    /// Spline coefficients of the `z^0` term, the fitted `mu(., x0)`.
    pub fn mu_star(&self) -> Vec<T> {
        self.theta
            .iter()
            .skip(self.k_order)
            .step_by(self.k_order)
            .copied()
            .collect()
    }
}

fn solve_columns<T: Scalar>(chol: &Cholesky<T>, rhs: &Matrix<T>) -> Matrix<T> {
    // Solves A X = rhs column by column.
    let (n, c) = (rhs.rows(), rhs.cols());
    let mut out = Matrix::zeros(n, c);
    for j in 0..c {
        let col: Vec<T> = (0..n).map(|i| rhs[(i, j)]).collect();
        for (i, v) in chol.solve(&col).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

fn condition_of<T: Scalar>(g: &Matrix<T>) -> T {
    let eig = symmetric_eigenvalues(g);
    let lo = eig[0];
    let hi = *eig.last().unwrap();
    if lo > T::zero() {
        hi / lo
    } else {
        T::infinity()
    }
}

/// Least-squares fit of `nu^{(l)}(x)` and `mu^{(l,m)}(u, x)` on an
/// `801 x 201` grid over `[0, A) x [x0 - h, x0 + h]` by polynomials of order
/// `k_order` in `z = (x - x0) / h` times the spline basis in `u`.
pub fn project_truth<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SplineBasis<T>,
    target: usize,
    x0: T,
    h: T,
    k_order: usize,
) -> Result<Projection<T>> {
    let d = model.dim();
    if basis.components() != d {
        return Err(Error::InvalidBasis(format!(
            "basis has {} components but the model has d = {d}",
            basis.components()
        )));
    }
    if target >= d {
        return Err(Error::Config(format!("target component {target} out of range for d = {d}")));
    }
    if !(x0 > T::zero() && x0 < T::one()) {
        return Err(Error::Config(format!("x0 = {x0} must lie in (0, 1)")));
    }
    if !(h > T::zero() && h < x0.min(T::one() - x0)) {
        return Err(Error::Config(format!("h = {h} must be below min(x0, 1 - x0)")));
    }
    if k_order == 0 {
        return Err(Error::Config("k_order must be at least 1".into()));
    }
    let a = model.support();
    let js = basis.scalar_len();
    let us: Vec<T> = (0..PROJECTION_U_POINTS)
        .map(|i| a * T::of_usize(i) / T::of_usize(PROJECTION_U_POINTS))
        .collect();
    let zs: Vec<T> = (0..PROJECTION_X_POINTS)
        .map(|i| T::lit(-1.0) + T::lit(2.0) * T::of_usize(i) / T::of_usize(PROJECTION_X_POINTS - 1))
        .collect();
    let xs: Vec<T> = zs.iter().map(|&z| x0 + h * z).collect();

    let u_design = Matrix::from_fn(us.len(), js, |r, i| basis.eval_scalar(i, us[r]));
    let z_design = Matrix::from_fn(zs.len(), k_order, |r, k| zs[r].powi(k as i32));
    let ug = u_design.transpose().matmul(&u_design);
    let zg = z_design.transpose().matmul(&z_design);
    let condition = condition_of(&ug) * condition_of(&zg);
    if !(condition.is_finite() && condition < T::one() / (T::epsilon() * T::lit(1e4))) {
        return Err(Error::SingularProjection {
            condition: condition.as_f64(),
        });
    }
    let singular = |_| Error::SingularProjection {
        condition: condition.as_f64(),
    };
    let u_chol = Cholesky::factor(&ug).map_err(singular)?;
    let z_chol = Cholesky::factor(&zg).map_err(singular)?;

    let mut theta = vec![T::zero(); (1 + d * js) * k_order];
    let mut eps = T::zero();

    // Baseline: (Z^T Z)^{-1} Z^T nu.
    let nu: Vec<T> = xs.iter().map(|&x| model.baseline_at(target, x)).collect();
    let znu: Vec<T> = (0..k_order)
        .map(|k| (0..zs.len()).map(|r| z_design[(r, k)] * nu[r]).sum())
        .collect();
    let c0 = z_chol.solve(&znu);
    theta[..k_order].copy_from_slice(&c0);
    for (r, &v) in nu.iter().enumerate() {
        let fit: T = (0..k_order).map(|k| c0[k] * z_design[(r, k)]).sum();
        eps = eps.max((fit - v).abs());
    }

    // Kernel: Theta_m = (U^T U)^{-1} U^T F_m Z (Z^T Z)^{-1}.
    for m in 0..d {
        let f = Matrix::from_fn(us.len(), xs.len(), |r, c| model.kernel_entry(target, m, us[r], xs[c]));
        let ufz = u_design.transpose().matmul(&f).matmul(&z_design);
        let left = solve_columns(&u_chol, &ufz);
        let coef = solve_columns(&z_chol, &left.transpose()).transpose();
        for i in 0..js {
            for k in 0..k_order {
                theta[(1 + m * js + i) * k_order + k] = coef[(i, k)];
            }
        }
        let fit = u_design.matmul(&coef).matmul(&z_design.transpose());
        eps = eps.max(fit.sub(&f).max_abs());
    }

    Ok(Projection {
        theta,
        eps,
        condition,
        target,
        k_order,
    })
}
