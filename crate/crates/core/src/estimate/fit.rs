//! End-to-end fits and error metrics.

use serde::Serialize;

use super::design::{assemble_design, assemble_stationary, DesignDiagnostics, DesignSystem};
use super::solve::{solve_coefficients, Solution};
use super::EstimatorConfig;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::quadrature::simpson_piecewise;
use crate::scalar::Scalar;
use crate::simulate::EventStream;
use crate::splines::SplineBasis;

/// Simpson panels over `[0, A]` in [`ise`].
pub const ISE_PANELS: usize = 4096;

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct FitResult<T> {
    pub config: EstimatorConfig,
    pub stationary: bool,
    /// Coefficients indexed `j * K + k`, `j = 0` the baseline.
    pub theta_hat: Vec<T>,
    /// `theta_{0,0}`: the estimate of `nu(x0)`.
    pub nu_star_hat: T,
    /// `theta_{j,0}` for `j >= 1`: spline coefficients of `mu(., x0)`.
    pub mu_star_hat: Vec<T>,
    pub ridge_used: T,
    pub residual: T,
    pub min_eig: T,
    pub max_eig: T,
    pub diagnostics: DesignDiagnostics,
    #[serde(skip)]
    pub design: DesignSystem<T>,
    #[serde(skip)]
    pub basis: SplineBasis<T>,
}

impl<T: Scalar> FitResult<T> {
    fn from_parts(
        config: EstimatorConfig,
        stationary: bool,
        design: DesignSystem<T>,
        basis: SplineBasis<T>,
        sol: Solution<T>,
    ) -> Self {
        let k = design.k_order;
        let mu_star_hat = sol.theta.iter().skip(k).step_by(k).copied().collect();
        Self {
            config,
            stationary,
            nu_star_hat: sol.theta[0],
            mu_star_hat,
            theta_hat: sol.theta,
            ridge_used: sol.ridge_used,
            residual: sol.residual,
            min_eig: sol.min_eig,
            max_eig: sol.max_eig,
            diagnostics: design.diagnostics.clone(),
            design,
            basis,
        }
    }

    /// Estimated `mu^{(l,m)}(u, x0)`; 0 outside `[0, A]`.
    pub fn mu_hat(&self, m: usize, u: T) -> T {
        self.basis.combine(&self.mu_star_hat, m, u)
    }

    pub fn objective(&self, theta: &[T]) -> T {
        self.design.objective(theta)
    }

    /// `(u, m, mu_hat)` on `n` equispaced points of `[0, A]` per component.
    pub fn eval_grid(&self, n: usize) -> Vec<(T, usize, T)> {
        let a = self.basis.support();
        let n = n.max(2);
        (0..self.basis.components())
            .flat_map(|m| {
                (0..n).map(move |i| {
                    let u = a * T::of_usize(i) / T::of_usize(n - 1);
                    (u, m, self.mu_hat(m, u))
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Localized fit of row `cfg.target` around `x0`.
pub fn fit_local<T: Scalar>(events: &EventStream<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    let basis = SplineBasis::from_params(&cfg.basis)?;
    let design = assemble_design(events, &basis, cfg)?;
    let sol = solve_coefficients(&design, T::lit(cfg.ridge))?;
    Ok(FitResult::from_parts(cfg.clone(), false, design, basis, sol))
}

/// Time-invariant fit over `[A, T]` with uniform weight; `x0`, `h`,
/// `k_order` and `kernel` in `cfg` are ignored.
pub fn fit_stationary<T: Scalar>(events: &EventStream<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    let basis = SplineBasis::from_params(&cfg.basis)?;
    let design = assemble_stationary(events, &basis, cfg.target, cfg.quad_step)?;
    let sol = solve_coefficients(&design, T::lit(cfg.ridge))?;
    let mut config = cfg.clone();
    config.k_order = 1;
    Ok(FitResult::from_parts(config, true, design, basis, sol))
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct IseReport<T> {
    /// `int_0^A (mu_hat^{(m)} - mu^{(l,m)}(u, x0))^2 du` per component `m`.
    pub per_component: Vec<T>,
    pub total: T,
    pub nu_error: T,
}

impl<T: Scalar> IseReport<T> {
    /// `sqrt(total)`.
    pub fn l2(&self) -> T {
        self.total.sqrt()
    }
}

/// Squared `L^2[0, A]` error of the fitted kernel row at rescaled time `x0`,
/// plus `|nu_hat - nu(x0)|`.
pub fn ise<T: Scalar>(fit: &FitResult<T>, truth: &ModelSpec<T>, x0: T) -> Result<IseReport<T>> {
    let d = truth.dim();
    let l = fit.config.target;
    if fit.basis.components() != d || (fit.basis.support() - truth.support()).abs() > T::epsilon() * truth.support() {
        return Err(Error::InvalidBasis("fitted basis does not match the model".into()));
    }
    let a = truth.support();
    let mut breaks: Vec<T> = (0..=fit.basis.spans())
        .map(|q| fit.basis.knot_spacing() * T::of_usize(q))
        .collect();
    breaks.extend(truth.shape_breakpoints().into_iter().filter(|&b| b > T::zero() && b < a));
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup_by(|x, y| (*x - *y).abs() <= T::epsilon() * a * T::lit(16.0));
    *breaks.last_mut().unwrap() = a;
    let per_component: Vec<T> = (0..d)
        .map(|m| {
            simpson_piecewise(
                |u| {
                    let e = fit.mu_hat(m, u) - truth.kernel_entry(l, m, u, x0);
                    e * e
                },
                &breaks,
                ISE_PANELS,
            )
        })
        .collect();
    Ok(IseReport {
        total: per_component.iter().copied().sum(),
        per_component,
        nu_error: (fit.nu_star_hat - truth.baseline_at(l, x0)).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{features_at, BoundaryMode, SmoothingKernel};
    use crate::model::{presets, Family, ModelConfig};
    use crate::quadrature::{gauss_legendre, gauss_on};
    use crate::simulate::{simulate, Engine, RngStream};
    use crate::splines::BasisParams;

    fn params(support: f64, order: usize, js: usize, d: usize) -> BasisParams {
        BasisParams { support, order, js, d }
    }

    fn sample(cfg: ModelConfig, horizon: f64, seed: u64) -> (ModelSpec<f64>, EventStream<f64>) {
        let model = ModelSpec::<f64>::new(cfg).unwrap();
        let warm = 20.0 * model.support();
        let ev = simulate(Engine::Cluster, &model, horizon, warm, RngStream::new(seed, 0)).unwrap();
        (model, ev)
    }

    #[test]
    fn empty_window_is_degenerate() {
        let ev = EventStream::<f64>::empty(1, 100.0, -20.0);
        let cfg = EstimatorConfig::new(0, 0.5, 0.1, params(1.0, 4, 6, 1));
        let basis = SplineBasis::from_params(&cfg.basis).unwrap();
        let design = assemble_design(&ev, &basis, &cfg).unwrap();
        assert!(design.diagnostics.degenerate);
        // Midpoint rule on the Epanechnikov density.
        assert!((design.delta[(0, 0)] - 1.0).abs() < 1e-4);
        for a in 0..design.dim() {
            for b in 0..design.dim() {
                if (a, b) != (0, 0) {
                    assert_eq!(design.delta[(a, b)], 0.0);
                }
            }
        }
        let fit = fit_local(&ev, &cfg).unwrap();
        assert!(fit.ridge_used > 0.0);
        assert!(fit.theta_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_event_design_matches_gauss_oracle() {
        // Window [40, 60], step 1/512, knots every 1: the event's feature
        // breakpoints fall on cell boundaries.
        let ev = EventStream::<f64>::from_unsorted(1, 100.0, -20.0, vec![(50.0, 0), (50.5, 0)]).unwrap();
        let mut cfg = EstimatorConfig::new(0, 0.5, 0.1, params(1.0, 4, 4, 1));
        assert_eq!(cfg.default_quad_step(100.0), 1.0 / 64.0);
        cfg.quad_step = Some(1.0 / 512.0);
        let basis = SplineBasis::from_params(&cfg.basis).unwrap();
        let design = assemble_design(&ev, &basis, &cfg).unwrap();
        assert_eq!(design.diagnostics.quad_step, 1.0 / 512.0);
        let rule = gauss_legendre::<f64>(12);
        let k = |t: f64| SmoothingKernel::Epanechnikov.eval((t - 50.0) / 10.0) / 10.0;
        let phi = |i: usize, t: f64| {
            let mut v = 0.0;
            for s in [50.0, 50.5] {
                if t > s && t - s < 1.0 {
                    v += basis.eval_scalar(i, t - s);
                }
            }
            v
        };
        let breaks = [50.0, 50.5, 51.0, 51.5];
        let integral = |f: &dyn Fn(f64) -> f64| -> f64 {
            breaks.windows(2).map(|w| gauss_on(f, w[0], w[1], &rule)).sum()
        };
        for i in 0..4 {
            let v = integral(&|t| phi(i, t) * k(t));
            assert!((design.delta[(0, 1 + i)] - v).abs() < 1e-4 * v.abs().max(1e-3), "{i} {} {v}", design.delta[(0, 1 + i)]);
            for j in 0..4 {
                let v = integral(&|t| phi(i, t) * phi(j, t) * k(t));
                assert!((design.delta[(1 + i, 1 + j)] - v).abs() < 1e-4 * v.abs().max(1e-3), "{i} {j}");
            }
        }
        // tau: both events are targets; only the second sees history.
        let mut tau = vec![k(50.0), k(50.5)];
        tau.extend((0..4).map(|i| k(50.5) * basis.eval_scalar(i, 0.5)));
        let expect = [tau[0] + tau[1], tau[2], tau[3], tau[4], tau[5]];
        for (a, b) in design.tau.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} {b}");
        }
    }

    #[test]
    fn quadratic_form_matches_finer_quadrature() {
        let (_, ev) = sample(presets::exp_tv(), 400.0, 3);
        let mut cfg = EstimatorConfig::new(0, 0.5, 0.25, params(3.0, 4, 6, 1));
        cfg.k_order = 2;
        cfg.quad_step = Some(0.002);
        let basis = SplineBasis::from_params(&cfg.basis).unwrap();
        let design = assemble_design(&ev, &basis, &cfg).unwrap();
        let theta: Vec<f64> = (0..design.dim()).map(|i| 0.3 + 0.1 * (i as f64).sin()).collect();
        let quad = crate::linalg::dot(&theta, &design.delta.mul_vec(&theta));
        let (start, half) = (100.0, 100.0);
        let n = 1_000_000;
        let step = 200.0 / n as f64;
        let near = ev.restricted(start - 3.0, start + 200.0);
        let oracle: f64 = (0..n)
            .map(|i| {
                let t = start + (i as f64 + 0.5) * step;
                let z = (t - 200.0) / half;
                let f = features_at(&basis, &near, t, z, 2);
                let lam = crate::linalg::dot(&f, &theta);
                lam * lam * SmoothingKernel::Epanechnikov.eval(z) / half * step
            })
            .sum();
        assert!((quad - oracle).abs() < 1e-3 * oracle, "{quad} {oracle}");
    }

    #[test]
    fn estimate_minimizes_objective() {
        let (_, ev) = sample(presets::stationary1(), 2000.0, 5);
        let cfg = EstimatorConfig::new(0, 0.5, 0.2, params(1.0, 3, 5, 1));
        let fit = fit_local(&ev, &cfg).unwrap();
        assert_eq!(fit.ridge_used, 0.0);
        assert!(fit.residual < 1e-8);
        let best = fit.objective(&fit.theta_hat);
        for r in 0..20 {
            let theta: Vec<f64> = fit
                .theta_hat
                .iter()
                .enumerate()
                .map(|(i, v)| v + 1e-3 * ((i * 7 + r * 13) as f64).sin())
                .collect();
            assert!(fit.objective(&theta) > best);
        }
    }

    #[test]
    fn distant_events_do_not_change_the_fit() {
        let (_, ev) = sample(presets::stationary1(), 2000.0, 6);
        let cfg = EstimatorConfig::new(0, 0.5, 0.1, params(1.0, 4, 5, 1));
        let base = fit_local(&ev, &cfg).unwrap();
        // Window is [800, 1200]; anything before 799 or after 1200 is ignored.
        let mut extra: Vec<(f64, usize)> = ev.iter().collect();
        extra.extend([(12.345, 0), (798.9, 0), (1200.0001, 0), (1999.0, 0)]);
        let ev2 = EventStream::from_unsorted(1, 2000.0, ev.warmup_start, extra).unwrap();
        let other = fit_local(&ev2, &cfg).unwrap();
        for (a, b) in base.theta_hat.iter().zip(&other.theta_hat) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn strict_window_rejects_edges_and_truncate_renormalizes() {
        let (_, ev) = sample(presets::poisson(), 1000.0, 7);
        let mut cfg = EstimatorConfig::new(0, 0.05, 0.1, params(1.0, 2, 4, 1));
        assert!(matches!(fit_local(&ev, &cfg), Err(Error::WindowOutOfRange { .. })));
        cfg.boundary = BoundaryMode::Truncate;
        let fit = fit_local(&ev, &cfg).unwrap();
        assert!(fit.diagnostics.kernel_mass < 1.0 && fit.diagnostics.kernel_mass > 0.5);
        assert_eq!(fit.diagnostics.window_start, 0.0);
        // Renormalized weight integrates to one.
        assert!((fit.design.delta[(0, 0)] - 1.0).abs() < 1e-3);
        assert!((fit.nu_star_hat - 1.0).abs() < 0.3, "{}", fit.nu_star_hat);
    }

    #[test]
    fn poisson_calibration() {
        let (model, ev) = sample(presets::poisson(), 20000.0, 8);
        let cfg = EstimatorConfig::new(0, 0.5, 0.5, params(1.0, 2, 4, 1));
        let fit = fit_stationary(&ev, &cfg).unwrap();
        assert!((fit.nu_star_hat - 1.0).abs() < 0.06, "{}", fit.nu_star_hat);
        let err = ise(&fit, &model, 0.5).unwrap();
        assert!(err.total < 0.02, "{}", err.total);
    }

    #[test]
    fn linear_baseline_slope_is_recovered() {
        let cfg = ModelConfig {
            d: 1,
            support: 1.0,
            horizon: 40000.0,
            family: Family::LinearBaseline {
                a: vec![1.0],
                b: vec![0.5],
                kernel_height: None,
            },
        };
        let (_, ev) = sample(cfg, 40000.0, 9);
        let mut est = EstimatorConfig::new(0, 0.5, 0.2, params(1.0, 1, 2, 1));
        est.k_order = 2;
        let fit = fit_local(&ev, &est).unwrap();
        // theta_{0,0} ~ nu(0.5) = 1.25 and theta_{0,1} ~ h nu' = 0.1.
        assert!((fit.theta_hat[0] - 1.25).abs() < 0.05, "{:?}", fit.theta_hat);
        assert!((fit.theta_hat[1] - 0.1).abs() < 0.05, "{:?}", fit.theta_hat);
    }

    #[test]
    fn piecewise_kernel_is_recovered() {
        let (model, ev) = sample(presets::piecewise(), 20000.0, 10);
        let cfg = EstimatorConfig::new(0, 0.5, 0.5, params(1.0, 1, 2, 1));
        let fit = fit_stationary(&ev, &cfg).unwrap();
        assert!((fit.mu_hat(0, 0.25) - 0.6).abs() < 0.1, "{}", fit.mu_hat(0, 0.25));
        assert!((fit.mu_hat(0, 0.75) - 0.2).abs() < 0.1, "{}", fit.mu_hat(0, 0.75));
        let err = ise(&fit, &model, 0.5).unwrap();
        assert!(err.total < 0.01, "{}", err.total);
        let json = fit.to_json().unwrap();
        assert!(json.contains("mu_star_hat"));
        assert_eq!(fit.eval_grid(11).len(), 11);
    }
}
