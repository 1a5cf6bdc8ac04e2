//! First and second moments: the mean intensity `Lambda(x)`, the series
//! `chi = sum_k mu^{(*k)}` and the covariance density of `dN`.
//!
//! Lags are discretized into cells of width `delta` on `[0, S_max)`; the
//! series terms are stored as cell masses. A term of order `k - 1` with mass
//! `F[j]` in cell `j` is placed at the cell midpoint `b_j` and convolved
//! with the exact cell masses of the shifted kernel, whose amplitude is
//! taken at rescaled time `x - b_j / T`:
//!
//! `F_k^{(l,m)}[n] = sum_{p, j} F_{k-1}^{(l,p)}[j] a^{(p,m)}(x - b_j / T) H^{(p,m)}[n - j]`,
//!
//! with `H[q] = int g` over `[(q - 1/2) delta, (q + 1/2) delta]`. Mass is
//! conserved exactly, so the stationary totals reproduce the matrix
//! geometric series up to truncation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};
use crate::model::ModelSpec;
use crate::quadrature::simpson_piecewise;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    /// Cells per unit of `A`.
    pub cells_per_support: usize,
    /// `S_max / A`.
    pub s_max_factor: usize,
    pub tol: f64,
    pub k_max: usize,
    /// Terms added after the stopping rule fires (for tail checks).
    pub extra_terms: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            cells_per_support: 1024,
            s_max_factor: 40,
            tol: 1e-6,
            k_max: 200,
            extra_terms: 0,
        }
    }
}

impl MomentOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// The series `chi(., x)` at one rescaled time.
#[derive(Clone, Debug)]
pub struct ChiSeries<T> {
    pub x: T,
    pub delta: T,
    /// `masses[l * d + m][n]`: mass of `chi^{(l,m)}` in cell `n`.
    pub masses: Vec<Vec<T>>,
    pub truncation_k: usize,
    pub tail_bound: T,
    /// Largest row sum of the mass of each term, `k = 1, 2, ...`.
    pub term_masses: Vec<T>,
}

impl<T: Scalar> ChiSeries<T> {
    pub fn cells(&self) -> usize {
        self.masses.first().map_or(0, Vec::len)
    }

    /// Total mass matrix `int chi(s, x) ds`.
    pub fn total(&self, d: usize) -> Matrix<T> {
        Matrix::from_fn(d, d, |l, m| self.masses[l * d + m].iter().copied().sum())
    }

    /// Density in the cell containing `s` (0 for `s < 0`).
    fn density(&self, d: usize, l: usize, m: usize, s: T) -> T {
        if s < T::zero() {
            return T::zero();
        }
        let n = (s / self.delta).floor().to_usize().unwrap_or(usize::MAX);
        self.masses[l * d + m].get(n).map_or(T::zero(), |&v| v / self.delta)
    }
}

struct Discretization<T> {
    d: usize,
    delta: T,
    n_cells: usize,
    /// Kernel shape masses per cell, `shape[(p * d + m)][n]`.
    cell_mass: Vec<Vec<T>>,
    /// Half-shifted shape masses, `half[(p * d + m)][q]`.
    half: Vec<Vec<T>>,
}

impl<T: Scalar> Discretization<T> {
    fn new(model: &ModelSpec<T>, opts: &MomentOptions) -> Self {
        let d = model.dim();
        let a = model.support();
        let per = opts.cells_per_support.max(1);
        let delta = a / T::of_usize(per);
        let n_cells = per * opts.s_max_factor.max(1);
        let half_delta = delta / T::lit(2.0);
        let mut cell_mass = Vec::with_capacity(d * d);
        let mut half = Vec::with_capacity(d * d);
        for p in 0..d {
            for m in 0..d {
                cell_mass.push(
                    (0..per)
                        .map(|n| {
                            let lo = delta * T::of_usize(n);
                            model.shape_integral(p, m, lo, lo + delta)
                        })
                        .collect(),
                );
                half.push(
                    (0..=per)
                        .map(|q| {
                            let c = delta * T::of_usize(q);
                            model.shape_integral(p, m, c - half_delta, c + half_delta)
                        })
                        .collect(),
                );
            }
        }
        Self {
            d,
            delta,
            n_cells,
            cell_mass,
            half,
        }
    }

    fn midpoint(&self, n: usize) -> T {
        self.delta * (T::of_usize(n) + T::lit(0.5))
    }
}

fn check_radius<T: Scalar>(model: &ModelSpec<T>) -> Result<T> {
    let rho = spectral_radius(&model.gamma_plus_exact())?;
    if rho >= T::one() {
        return Err(Error::Supercritical { radius: rho.as_f64() });
    }
    Ok(rho)
}

fn chi_series<T: Scalar>(
    model: &ModelSpec<T>,
    disc: &Discretization<T>,
    rho: T,
    x: T,
    opts: &MomentOptions,
) -> Result<ChiSeries<T>> {
    let d = disc.d;
    let horizon = model.horizon();
    let n_cells = disc.n_cells;
    let tol = T::lit(opts.tol);
    let geometric = T::one() / (T::one() - rho);

    let mut chi: Vec<Vec<T>> = vec![vec![T::zero(); n_cells]; d * d];
    let mut term: Vec<Vec<T>> = (0..d * d)
        .map(|lm| {
            let (l, m) = (lm / d, lm % d);
            let amp = model.amplitude(l, m, x);
            let mut v = vec![T::zero(); n_cells];
            for (n, &g) in disc.cell_mass[lm].iter().enumerate().take(n_cells) {
                v[n] = amp * g;
            }
            v
        })
        .collect();
    // Highest occupied cell (exclusive) of the current term.
    let mut len = disc.cell_mass[0].len().min(n_cells);
    let mut lost = T::zero();
    let mut term_masses = Vec::new();
    let mut stop_at: Option<usize> = None;
    let mut k = 1;
    loop {
        let mut worst = T::zero();
        for l in 0..d {
            let row: T = (0..d).map(|m| term[l * d + m][..len].iter().copied().sum::<T>()).sum();
            worst = worst.max(row);
        }
        for (acc, t) in chi.iter_mut().zip(&term) {
            for (a, &v) in acc[..len].iter_mut().zip(&t[..len]) {
                *a += v;
            }
        }
        term_masses.push(worst);
        if stop_at.is_none() && worst * geometric < tol {
            stop_at = Some(k);
        }
        if let Some(s) = stop_at {
            if k >= s + opts.extra_terms {
                let tail = worst * rho * geometric + lost;
                let used = chi
                    .iter()
                    .map(|c| c.iter().rposition(|v| *v != T::zero()).map_or(0, |p| p + 1))
                    .max()
                    .unwrap_or(0);
                for c in chi.iter_mut() {
                    c.truncate(used);
                }
                if tail > tol {
                    return Err(Error::SeriesTolerance {
                        tol: opts.tol,
                        k_max: opts.k_max,
                        achieved: tail.as_f64(),
                    });
                }
                return Ok(ChiSeries {
                    x,
                    delta: disc.delta,
                    masses: chi,
                    truncation_k: k,
                    tail_bound: tail,
                    term_masses,
                });
            }
        }
        if k >= opts.k_max {
            return Err(Error::SeriesTolerance {
                tol: opts.tol,
                k_max: opts.k_max,
                achieved: (worst * geometric + lost).as_f64(),
            });
        }

        // Next term.
        let nk = disc.half[0].len();
        let new_len = (len + nk - 1).min(n_cells);
        let mut next: Vec<Vec<T>> = vec![vec![T::zero(); n_cells]; d * d];
        let mut lost_rows = vec![T::zero(); d];
        for l in 0..d {
            for p in 0..d {
                let src = &term[l * d + p][..len];
                for m in 0..d {
                    let h = &disc.half[p * d + m];
                    if h.iter().all(|v| *v == T::zero()) {
                        continue;
                    }
                    let out = &mut next[l * d + m];
                    for (j, &f) in src.iter().enumerate() {
                        if f == T::zero() {
                            continue;
                        }
                        let c = f * model.amplitude(p, m, x - disc.midpoint(j) / horizon);
                        let end = (j + nk).min(n_cells);
                        for (o, &hv) in out[j..end].iter_mut().zip(h) {
                            *o += c * hv;
                        }
                        if j + nk > n_cells {
                            lost_rows[l] += c * h[n_cells - j..].iter().copied().sum::<T>();
                        }
                    }
                }
            }
        }
        lost += lost_rows.into_iter().fold(T::zero(), T::max);
        term = next;
        len = new_len;
        k += 1;
    }
}

/// Computes `chi(., x)` at each point of `x_grid`.
pub fn compute_chi<T: Scalar>(model: &ModelSpec<T>, x_grid: &[T], opts: &MomentOptions) -> Result<Vec<ChiSeries<T>>> {
    let rho = check_radius(model)?;
    let disc = Discretization::new(model, opts);
    x_grid
        .par_iter()
        .map(|&x| chi_series(model, &disc, rho, x, opts))
        .collect()
}

/// `nu(x) + int chi(s, x) nu(x - s / T) ds` from a computed series.
fn lambda_from_series<T: Scalar>(model: &ModelSpec<T>, series: &ChiSeries<T>, x: T) -> Vec<T> {
    let d = model.dim();
    let horizon = model.horizon();
    // Baseline at cell midpoints is shared across components.
    let n = series.cells();
    let mut out = model.baseline(x);
    for m in 0..d {
        let nu_m: Vec<T> = (0..n)
            .map(|c| model.baseline_at(m, x - series.delta * (T::of_usize(c) + T::lit(0.5)) / horizon))
            .collect();
        for (l, o) in out.iter_mut().enumerate() {
            *o += series.masses[l * d + m]
                .iter()
                .zip(&nu_m)
                .map(|(&w, &v)| w * v)
                .sum::<T>();
        }
    }
    out
}

/// Gridded first-order moments with the series that produced them.
#[derive(Clone, Debug)]
pub struct MomentTable<T> {
    model: ModelSpec<T>,
    pub options: MomentOptions,
    pub x_grid: Vec<T>,
    /// `lambda[i]` is `Lambda(x_grid[i])`.
    pub lambda: Vec<Vec<T>>,
    /// One series per grid point, or a single one when the kernel does not
    /// depend on `x`.
    pub chi: Vec<ChiSeries<T>>,
    pub truncation_k: usize,
    pub tail_bound: T,
    /// Largest renewal residual over the grid.
    pub renewal_residual: T,
}

fn kernel_invariant<T: Scalar>(model: &ModelSpec<T>) -> bool {
    let d = model.dim();
    (0..d).all(|l| (0..d).all(|m| model.amplitude(l, m, T::zero()) == model.amplitude(l, m, T::one())))
}

/// Quadratic interpolation through `(x0, y0), (x0 - h, y1), (x0 - 2h, y2)`.
fn quad_interp<T: Scalar>(x0: T, h: T, y: [T; 3], x: T) -> T {
    let u = (x0 - x) / h;
    let two = T::lit(2.0);
    y[0] * (u - T::one()) * (u - two) / two - y[1] * u * (u - two) + y[2] * u * (u - T::one()) / two
}

/// Computes `Lambda` on `x_grid` from the series and checks it against the
/// renewal identity `Lambda(x) = nu(x) + int mu(s, x) Lambda(x - s / T) ds`.
///
/// Fails when the residual exceeds `10 tol` anywhere on the grid.
pub fn compute_lambda<T: Scalar>(model: &ModelSpec<T>, x_grid: &[T], opts: &MomentOptions) -> Result<MomentTable<T>> {
    let rho = check_radius(model)?;
    let disc = Discretization::new(model, opts);
    let d = model.dim();
    let horizon = model.horizon();
    let invariant = kernel_invariant(model);

    type Row<T> = (Vec<T>, Option<ChiSeries<T>>, T);
    let rows: Vec<Row<T>> = if invariant {
        let series = chi_series(model, &disc, rho, T::zero(), opts)?;
        let rows = x_grid
            .par_iter()
            .map(|&x| {
                let lam = lambda_from_series(model, &series, x);
                let residual = renewal_residual(model, &disc, x, &lam, |x| lambda_from_series(model, &series, x));
                (lam, None, residual)
            })
            .collect::<Vec<_>>();
        let mut rows = rows;
        rows[0].1 = Some(series);
        rows
    } else {
        x_grid
            .par_iter()
            .map(|&x| -> Result<Row<T>> {
                let h = model.support() / (T::lit(2.0) * horizon);
                let mut stencil = Vec::with_capacity(3);
                let mut first = None;
                for i in 0..3 {
                    let xi = x - h * T::of_usize(i);
                    let s = chi_series(model, &disc, rho, xi, opts)?;
                    stencil.push(lambda_from_series(model, &s, xi));
                    if i == 0 {
                        first = Some(s);
                    }
                }
                let lam = stencil[0].clone();
                let residual = renewal_residual(model, &disc, x, &lam, |y| {
                    (0..d)
                        .map(|m| quad_interp(x, h, [stencil[0][m], stencil[1][m], stencil[2][m]], y))
                        .collect()
                });
                Ok((lam, first, residual))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let limit = T::lit(10.0 * opts.tol);
    let mut lambda = Vec::with_capacity(rows.len());
    let mut chi = Vec::new();
    let mut worst = T::zero();
    for ((lam, series, residual), &x) in rows.into_iter().zip(x_grid) {
        if residual > limit {
            return Err(Error::RenewalInconsistency {
                residual: residual.as_f64(),
                limit: limit.as_f64(),
                x: x.as_f64(),
            });
        }
        worst = worst.max(residual);
        lambda.push(lam);
        if let Some(s) = series {
            chi.push(s);
        }
    }
    let truncation_k = chi.iter().map(|s| s.truncation_k).max().unwrap_or(0);
    let tail_bound = chi.iter().map(|s| s.tail_bound).fold(T::zero(), T::max);
    Ok(MomentTable {
        model: model.clone(),
        options: *opts,
        x_grid: x_grid.to_vec(),
        lambda,
        chi,
        truncation_k,
        tail_bound,
        renewal_residual: worst,
    })
}

/// Largest component of `|Lambda(x) - nu(x) - int mu(s, x) Lambda(x - s / T) ds|`.
fn renewal_residual<T: Scalar>(
    model: &ModelSpec<T>,
    disc: &Discretization<T>,
    x: T,
    lam: &[T],
    lambda_at: impl Fn(T) -> Vec<T>,
) -> T {
    let d = model.dim();
    let horizon = model.horizon();
    let per = disc.cell_mass[0].len();
    let history: Vec<Vec<T>> = (0..per).map(|n| lambda_at(x - disc.midpoint(n) / horizon)).collect();
    let mut worst = T::zero();
    for (l, &lam_l) in lam.iter().enumerate() {
        let mut rhs = model.baseline_at(l, x);
        for m in 0..d {
            let amp = model.amplitude(l, m, x);
            rhs += amp
                * disc.cell_mass[l * d + m]
                    .iter()
                    .zip(&history)
                    .map(|(&g, h)| g * h[m])
                    .sum::<T>();
        }
        worst = worst.max((lam_l - rhs).abs());
    }
    worst
}

/// Covariance density of `dN_t dN_{t'}^T`: a regular part and the
/// coefficient of `delta(t - t')`.
#[derive(Clone, Debug)]
pub struct CovarianceDensity<T> {
    pub regular: Matrix<T>,
    pub dirac: Matrix<T>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Largest lag covered by the series.
    pub fn max_lag(&self) -> T {
        let disc_cells = self.options.cells_per_support * self.options.s_max_factor;
        self.model.support() * T::of_usize(disc_cells) / T::of_usize(self.options.cells_per_support)
    }

    fn bracket(&self, x: T) -> (usize, usize, T) {
        let g = &self.x_grid;
        if g.len() == 1 || x <= g[0] {
            return (0, 0, T::zero());
        }
        if x >= g[g.len() - 1] {
            return (g.len() - 1, g.len() - 1, T::zero());
        }
        let hi = g.partition_point(|&v| v <= x).min(g.len() - 1);
        let lo = hi - 1;
        (lo, hi, (x - g[lo]) / (g[hi] - g[lo]))
    }

    /// `Lambda(x)`, linearly interpolated on the grid (constant for
    /// time-invariant models).
    pub fn lambda_at(&self, x: T) -> Vec<T> {
        if self.model.is_time_invariant() {
            return self.lambda[0].clone();
        }
        let (lo, hi, w) = self.bracket(x);
        self.lambda[lo]
            .iter()
            .zip(&self.lambda[hi])
            .map(|(&a, &b)| a + (b - a) * w)
            .collect()
    }

    /// `chi^{(l,m)}(s, x)`, cell-wise constant in `s`, linear in `x`
    /// between grid points.
    pub fn chi_density(&self, l: usize, m: usize, s: T, x: T) -> Result<T> {
        if s >= self.max_lag() {
            return Err(Error::LagOutOfRange {
                lag: s.as_f64(),
                max: self.max_lag().as_f64(),
            });
        }
        let d = self.dim();
        if self.chi.len() == 1 {
            return Ok(self.chi[0].density(d, l, m, s));
        }
        let (lo, hi, w) = self.bracket(x);
        let a = self.chi[lo].density(d, l, m, s);
        let b = self.chi[hi].density(d, l, m, s);
        Ok(a + (b - a) * w)
    }

    fn chi_matrix(&self, s: T, x: T) -> Result<Matrix<T>> {
        let d = self.dim();
        let mut out = Matrix::zeros(d, d);
        for l in 0..d {
            for m in 0..d {
                out[(l, m)] = self.chi_density(l, m, s, x)?;
            }
        }
        Ok(out)
    }

    /// `E[dN_t dN_{t'}^T] / (dt dt')` as a regular density plus a Dirac
    /// coefficient. At `t = t'` the two one-sided cross terms are averaged.
    pub fn covariance_density(&self, t: T, t_prime: T) -> Result<CovarianceDensity<T>> {
        let d = self.dim();
        let horizon = self.model.horizon();
        let (x, xp) = (t / horizon, t_prime / horizon);
        let lam = self.lambda_at(x);
        let lam_p = self.lambda_at(xp);
        let sigma_p = Matrix::from_fn(d, d, |i, j| if i == j { lam_p[i] } else { T::zero() });
        let sigma = Matrix::from_fn(d, d, |i, j| if i == j { lam[i] } else { T::zero() });

        let mut regular = Matrix::from_fn(d, d, |i, j| lam[i] * lam_p[j]);
        let lag = t - t_prime;
        if lag > T::zero() {
            regular = regular.add(&self.chi_matrix(lag, x)?.matmul(&sigma_p));
        } else if lag < T::zero() {
            regular = regular.add(&sigma.matmul(&self.chi_matrix(-lag, xp)?.transpose()));
        } else {
            let c = self.chi_matrix(T::zero(), x)?;
            let half = T::lit(0.5);
            regular = regular.add(&c.matmul(&sigma_p).add(&sigma.matmul(&c.transpose())).scale(half));
        }

        // int chi(t - s, x) Sigma_s chi(t' - s, x')^T ds over s < min(t, t').
        let series_delta = self.chi[0].delta;
        let cells = self.chi.iter().map(ChiSeries::cells).max().unwrap_or(0);
        let base = t.min(t_prime);
        let mut integral = Matrix::zeros(d, d);
        for n in 0..cells {
            let v = series_delta * (T::of_usize(n) + T::lit(0.5));
            let s = base - v;
            let (ls, lsp) = (t - s, t_prime - s);
            if ls >= self.max_lag() || lsp >= self.max_lag() {
                break;
            }
            let lam_s = self.lambda_at(s / horizon);
            let a = self.chi_matrix(ls, x)?;
            let b = self.chi_matrix(lsp, xp)?;
            for i in 0..d {
                for j in 0..d {
                    let mut acc = T::zero();
                    for k in 0..d {
                        acc += a[(i, k)] * lam_s[k] * b[(j, k)];
                    }
                    integral[(i, j)] += acc * series_delta;
                }
            }
        }
        regular = regular.add(&integral);
        let dirac = if lag == T::zero() { sigma } else { Matrix::zeros(d, d) };
        Ok(CovarianceDensity { regular, dirac })
    }

    /// `Cov(N[a, a + w), N[b, b + w))` (a `d x d` matrix).
    ///
    /// For time-invariant models the double integral is evaluated in closed
    /// form against the cell-wise constant `chi`; otherwise a 32 x 32
    /// midpoint rule over the two bins is applied to [`Self::covariance_density`].
    pub fn bin_count_covariance(&self, a: T, b: T, w: T) -> Result<Matrix<T>> {
        if self.model.is_time_invariant() && self.chi.len() == 1 {
            return Ok(self.stationary_bin_covariance(b - a, w));
        }
        let d = self.dim();
        let n = 32;
        let h = w / T::of_usize(n);
        let mut acc = Matrix::zeros(d, d);
        let mut mean_a = vec![T::zero(); d];
        let mut mean_b = vec![T::zero(); d];
        let horizon = self.model.horizon();
        for i in 0..n {
            let t = a + h * (T::of_usize(i) + T::lit(0.5));
            for (m, v) in self.lambda_at(t / horizon).into_iter().enumerate() {
                mean_a[m] += v * h;
            }
            let tb = b + h * (T::of_usize(i) + T::lit(0.5));
            for (m, v) in self.lambda_at(tb / horizon).into_iter().enumerate() {
                mean_b[m] += v * h;
            }
            for j in 0..n {
                let tp = b + h * (T::of_usize(j) + T::lit(0.5));
                let c = self.covariance_density(t, tp)?;
                acc = acc.add(&c.regular.scale(h * h));
            }
        }
        // Dirac part: Sigma integrated over the overlap of the bins.
        let lo = a.max(b);
        let hi = (a + w).min(b + w);
        if hi > lo {
            let m = 64;
            let step = (hi - lo) / T::of_usize(m);
            for i in 0..m {
                let t = lo + step * (T::of_usize(i) + T::lit(0.5));
                for (k, v) in self.lambda_at(t / horizon).into_iter().enumerate() {
                    acc[(k, k)] += v * step;
                }
            }
        }
        Ok(Matrix::from_fn(d, d, |i, j| acc[(i, j)] - mean_a[i] * mean_b[j]))
    }

    fn stationary_bin_covariance(&self, offset: T, w: T) -> Matrix<T> {
        let d = self.dim();
        let series = &self.chi[0];
        let delta = series.delta;
        let lam = self.lambda_at(T::zero());
        // W(u): length of {(t, t') in A x B : t - t' = u}, a triangle of
        // half-width w centred at -offset.
        let c = -offset;
        let weight = |u: T| (w - (u - c).abs()).max(T::zero());
        let (u_lo, u_hi) = (c - w, c + w);
        // Integral of a cell-constant function times W over [lo, hi].
        let integrate_cell = |lo: T, hi: T| -> T {
            let lo = lo.max(u_lo);
            let hi = hi.min(u_hi);
            if hi <= lo {
                return T::zero();
            }
            let mut breaks = vec![lo];
            if c > lo && c < hi {
                breaks.push(c);
            }
            breaks.push(hi);
            simpson_piecewise(weight, &breaks, 2)
        };

        let mut cov = Matrix::zeros(d, d);
        let overlap = weight(T::zero()).max(T::zero());
        for k in 0..d {
            cov[(k, k)] += lam[k] * overlap;
        }
        let cells = series.cells();
        for n in 0..cells {
            let lo = delta * T::of_usize(n);
            let hi = lo + delta;
            let pos = integrate_cell(lo, hi) / delta;
            let neg = integrate_cell(-hi, -lo) / delta;
            if pos == T::zero() && neg == T::zero() {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    // chi(u) Sigma for u > 0 and Sigma chi(-u)^T for u < 0.
                    cov[(i, j)] += series.masses[i * d + j][n] * lam[j] * pos;
                    cov[(i, j)] += lam[i] * series.masses[j * d + i][n] * neg;
                }
            }
        }

        // Psi(u) = int chi(u + v) Sigma chi(v)^T dv is linear between the
        // nodes u = q delta, where it equals sum_j M_{j+q} Sigma M_j^T / delta.
        let psi_at = |q: i64| -> Matrix<T> {
            let mut out = Matrix::zeros(d, d);
            let (shift, transpose) = if q >= 0 { (q as usize, false) } else { ((-q) as usize, true) };
            for j in 0..cells.saturating_sub(shift) {
                for i in 0..d {
                    for jj in 0..d {
                        let mut acc = T::zero();
                        for k in 0..d {
                            let (x1, x2) = if transpose {
                                (series.masses[i * d + k][j], series.masses[jj * d + k][j + shift])
                            } else {
                                (series.masses[i * d + k][j + shift], series.masses[jj * d + k][j])
                            };
                            acc += x1 * lam[k] * x2;
                        }
                        out[(i, jj)] += acc;
                    }
                }
            }
            out.scale(T::one() / delta)
        };
        let q_lo = (u_lo / delta).floor().to_i64().unwrap();
        let q_hi = (u_hi / delta).ceil().to_i64().unwrap();
        let nodes: Vec<Matrix<T>> = (q_lo..=q_hi).map(psi_at).collect();
        for (idx, q) in (q_lo..q_hi).enumerate() {
            let lo = delta * T::lit(q as f64);
            let hi = lo + delta;
            let (p0, p1) = (&nodes[idx], &nodes[idx + 1]);
            let lo_c = lo.max(u_lo);
            let hi_c = hi.min(u_hi);
            if hi_c <= lo_c {
                continue;
            }
            let mut breaks = vec![lo_c];
            if c > lo_c && c < hi_c {
                breaks.push(c);
            }
            breaks.push(hi_c);
            for i in 0..d {
                for j in 0..d {
                    let f = |u: T| {
                        let s = (u - lo) / delta;
                        (p0[(i, j)] + (p1[(i, j)] - p0[(i, j)]) * s) * weight(u)
                    };
                    cov[(i, j)] += simpson_piecewise(f, &breaks, 2);
                }
            }
        }
        cov
    }

    /// CSV rows `x,l,Lambda_l` (1-based `l`).
    pub fn lambda_csv(&self) -> String {
        let mut out = String::from("x,l,Lambda_l\n");
        for (x, lam) in self.x_grid.iter().zip(&self.lambda) {
            for (l, v) in lam.iter().enumerate() {
                writeln!(out, "{},{},{}", x.as_f64(), l + 1, v.as_f64()).unwrap();
            }
        }
        out
    }

    /// CSV rows `x,s,l,m,chi_lm` at cell midpoints (densities).
    pub fn chi_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("x,s,l,m,chi_lm\n");
        for series in &self.chi {
            for n in 0..series.cells() {
                let s = series.delta * (T::of_usize(n) + T::lit(0.5));
                for l in 0..d {
                    for m in 0..d {
                        let v = series.masses[l * d + m][n] / series.delta;
                        writeln!(out, "{},{},{},{},{}", series.x.as_f64(), s.as_f64(), l + 1, m + 1, v.as_f64()).unwrap();
                    }
                }
            }
        }
        out
    }
}

/// `n` equally spaced points on `[0, 1]`.
pub fn unit_grid<T: Scalar>(n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![T::lit(0.5)],
        _ => (0..n).map(|i| T::of_usize(i) / T::of_usize(n - 1)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_lu;
    use crate::model::{presets, Family, ModelConfig};

    fn stationary_closed_form(model: &ModelSpec<f64>) -> Vec<f64> {
        let d = model.dim();
        let g = model.branching_at(0.0);
        let i_minus = Matrix::identity(d).sub(&g);
        solve_lu(&i_minus, &model.baseline(0.0)).unwrap()
    }

    fn coarse() -> MomentOptions {
        MomentOptions {
            cells_per_support: 128,
            ..MomentOptions::default()
        }
    }

    #[test]
    fn zero_kernel_gives_zero_series_and_baseline() {
        let cfg = ModelConfig {
            d: 1,
            support: 1.0,
            horizon: 100.0,
            family: Family::LinearBaseline {
                a: vec![1.0],
                b: vec![0.5],
                kernel_height: None,
            },
        };
        let model = ModelSpec::<f64>::new(cfg).unwrap();
        let chi = compute_chi(&model, &[0.5], &coarse()).unwrap();
        assert_eq!(chi[0].truncation_k, 1);
        assert!(chi[0].masses.iter().flatten().all(|v| *v == 0.0));
        let grid = unit_grid(11);
        let table = compute_lambda(&model, &grid, &coarse()).unwrap();
        for (x, lam) in grid.iter().zip(&table.lambda) {
            assert!((lam[0] - (1.0 + 0.5 * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn box_kernel_series_mass() {
        let model = ModelSpec::<f64>::new(presets::stationary1()).unwrap();
        let chi = compute_chi(&model, &[0.3], &MomentOptions::default()).unwrap();
        let total = chi[0].total(1)[(0, 0)];
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert!(chi[0].tail_bound <= 1e-6);
    }

    #[test]
    fn bivariate_series_mass_matches_matrix_series() {
        let model = ModelSpec::<f64>::new(presets::preset2()).unwrap();
        let chi = compute_chi(&model, &[0.5], &coarse()).unwrap();
        let g = model.branching_at(0.5);
        // (I - G)^{-1} G column by column.
        let i_minus = Matrix::identity(2).sub(&g);
        for m in 0..2 {
            let col: Vec<f64> = (0..2).map(|l| g[(l, m)]).collect();
            let want = solve_lu(&i_minus, &col).unwrap();
            for l in 0..2 {
                let got = chi[0].total(2)[(l, m)];
                assert!((got - want[l]).abs() < 1e-6, "({l},{m}) {got} vs {}", want[l]);
            }
        }
    }

    #[test]
    fn stationary_lambda_closed_form() {
        for cfg in [presets::stationary1(), presets::preset2(), presets::piecewise()] {
            let model = ModelSpec::<f64>::new(cfg).unwrap();
            let table = compute_lambda(&model, &[0.0, 0.5, 1.0], &coarse()).unwrap();
            let want = stationary_closed_form(&model);
            for lam in &table.lambda {
                for (a, b) in lam.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-5, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn partial_sums_are_monotone_and_tail_bound_holds() {
        let model = ModelSpec::<f64>::new(presets::exp_tv()).unwrap();
        let base = compute_chi(&model, &[0.4], &coarse()).unwrap().remove(0);
        let more = compute_chi(
            &model,
            &[0.4],
            &MomentOptions {
                extra_terms: 5,
                ..coarse()
            },
        )
        .unwrap()
        .remove(0);
        assert_eq!(more.truncation_k, base.truncation_k + 5);
        let diff: f64 = more.masses[0]
            .iter()
            .zip(base.masses[0].iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, b)| {
                assert!(a >= b);
                a - b
            })
            .sum();
        assert!(diff < base.tail_bound, "{diff} vs {}", base.tail_bound);
        assert!(base.term_masses.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn renewal_residual_small_on_time_varying_presets() {
        for cfg in [presets::exp_tv(), presets::sine()] {
            let model = ModelSpec::<f64>::new(cfg).unwrap();
            let table = compute_lambda(&model, &unit_grid(5), &coarse()).unwrap();
            assert!(table.renewal_residual < 1e-5, "{}", table.renewal_residual);
        }
    }

    #[test]
    fn poisson_covariance_density() {
        let model = ModelSpec::<f64>::new(presets::poisson()).unwrap();
        let table = compute_lambda(&model, &[0.0, 1.0], &coarse()).unwrap();
        let c = table.covariance_density(10.0, 12.0).unwrap();
        assert_eq!(c.regular[(0, 0)], 1.0);
        assert_eq!(c.dirac[(0, 0)], 0.0);
        let c = table.covariance_density(10.0, 10.0).unwrap();
        assert_eq!(c.dirac[(0, 0)], 1.0);
        let cov = table.bin_count_covariance(3.0, 3.0, 0.1).unwrap();
        assert!((cov[(0, 0)] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn covariance_density_exchange_symmetry() {
        let model = ModelSpec::<f64>::new(presets::preset2_tv()).unwrap();
        let table = compute_lambda(&model, &unit_grid(3), &coarse()).unwrap();
        let (t, tp) = (900.0, 901.3);
        let a = table.covariance_density(t, tp).unwrap();
        let b = table.covariance_density(tp, t).unwrap();
        assert!(a.regular.sub(&b.regular.transpose()).max_abs() < 1e-12);
    }

    #[test]
    fn stationary_bin_covariance_matches_density_quadrature() {
        // The closed-form path against brute-force integration of the density.
        let model = ModelSpec::<f64>::new(presets::stationary1()).unwrap();
        let table = compute_lambda(&model, &[0.0, 1.0], &coarse()).unwrap();
        let w = 0.1;
        // A node grid of n x n has O(1/n) error where chi jumps (lag 1).
        for (lag, n, rel) in [(0.5, 40, 2e-4), (0.75, 40, 2e-4), (1.0, 120, 4e-3)] {
            let fast = table.bin_count_covariance(100.0, 100.0 + lag, w).unwrap()[(0, 0)];
            let h = w / n as f64;
            let mut slow = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let t = 100.0 + (i as f64 + 0.5) * h;
                    let tp = 100.0 + lag + (j as f64 + 0.5) * h;
                    slow += table.covariance_density(t, tp).unwrap().regular[(0, 0)] * h * h;
                }
            }
            slow -= (w * 1.0) * (w * 1.0);
            assert!((fast - slow).abs() < rel * fast.abs().max(1e-3), "lag {lag}: {fast} vs {slow}");
        }
    }

    #[test]
    fn lag_beyond_table_is_an_error() {
        let model = ModelSpec::<f64>::new(presets::stationary1()).unwrap();
        let table = compute_lambda(&model, &[0.0], &coarse()).unwrap();
        assert!(matches!(table.chi_density(0, 0, 41.0, 0.0), Err(Error::LagOutOfRange { .. })));
        assert_eq!(table.chi_density(0, 0, -0.5, 0.0).unwrap(), 0.0);
    }
}
