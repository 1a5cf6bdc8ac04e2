use serde::Serialize;

use super::ModelSpec;
use crate::error::Result;
use crate::linalg::{spectral_radius, Matrix};
use crate::quadrature::simpson_piecewise;
use crate::scalar::Scalar;

/// Simpson panels over `[0, A]` for the branching integrals.
pub const GAMMA_PANELS: usize = 2048;
/// Points of the `x`-grid on `[0, 1]` over which the supremum is taken.
pub const GAMMA_SUP_POINTS: usize = 512;

/// Branching matrix `int_0^A sup_{x <= 1} mu(s, x) ds` and its spectral radius.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct GammaMatrix<T> {
    pub entries: Matrix<T>,
    pub radius: T,
}

/// Quadrature route to the branching matrix.
pub fn gamma_plus<T: Scalar>(spec: &ModelSpec<T>) -> Result<GammaMatrix<T>> {
    let d = spec.dim();
    let xs: Vec<T> = (0..GAMMA_SUP_POINTS)
        .map(|i| T::of_usize(i) / T::of_usize(GAMMA_SUP_POINTS - 1))
        .collect();
    let breaks = spec.shape_breakpoints();
    let entries = Matrix::from_fn(d, d, |l, m| {
        let sup_kernel = |s: T| {
            xs.iter()
                .fold(T::zero(), |acc, &x| acc.max(spec.kernel_entry(l, m, s, x)))
        };
        simpson_piecewise(sup_kernel, &breaks, GAMMA_PANELS)
    });
    let radius = spectral_radius(&entries)?;
    Ok(GammaMatrix { entries, radius })
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ValidationReport<T> {
    pub family: String,
    pub baseline_min: Vec<T>,
    pub baseline_max: Vec<T>,
    pub kernel_min: Matrix<T>,
    pub kernel_max: Matrix<T>,
    pub gamma: GammaMatrix<T>,
    pub violations: Vec<String>,
    pub passes: bool,
}

/// Grid check of positivity, boundedness, support and subcriticality.
///
/// `grid_density` is the number of grid points per unit of `x` and of `s`.
pub fn validate_model<T: Scalar>(spec: &ModelSpec<T>, grid_density: usize) -> Result<ValidationReport<T>> {
    let d = spec.dim();
    let a = spec.support();
    let density = grid_density.max(1);
    let nx = density + 1;
    let ns = (a * T::of_usize(density)).ceil().to_usize().unwrap_or(1).max(1) + 1;
    let xs: Vec<T> = (0..nx).map(|i| T::of_usize(i) / T::of_usize(nx - 1)).collect();
    // [0, A) sampled on ns points; s = A itself is a support check below.
    let ss: Vec<T> = (0..ns).map(|i| a * T::of_usize(i) / T::of_usize(ns)).collect();

    let mut violations = Vec::new();
    let mut baseline_min = vec![T::infinity(); d];
    let mut baseline_max = vec![T::neg_infinity(); d];
    for &x in &xs {
        for m in 0..d {
            let v = spec.baseline_at(m, x);
            baseline_min[m] = baseline_min[m].min(v);
            baseline_max[m] = baseline_max[m].max(v);
        }
    }
    for m in 0..d {
        if !(baseline_min[m] > T::zero()) {
            violations.push(format!("baseline {m} reaches {} <= 0", baseline_min[m]));
        }
        if !baseline_max[m].is_finite() {
            violations.push(format!("baseline {m} is unbounded"));
        }
    }

    let mut kernel_min = Matrix::from_fn(d, d, |_, _| T::infinity());
    let mut kernel_max = Matrix::from_fn(d, d, |_, _| T::neg_infinity());
    for &x in &xs {
        for &s in &ss {
            for l in 0..d {
                for m in 0..d {
                    let v = spec.kernel_entry(l, m, s, x);
                    kernel_min[(l, m)] = kernel_min[(l, m)].min(v);
                    kernel_max[(l, m)] = kernel_max[(l, m)].max(v);
                }
            }
        }
    }
    for l in 0..d {
        for m in 0..d {
            if kernel_min[(l, m)] < T::zero() {
                violations.push(format!("kernel ({l},{m}) reaches {} < 0", kernel_min[(l, m)]));
            }
            if !kernel_max[(l, m)].is_finite() {
                violations.push(format!("kernel ({l},{m}) is unbounded"));
            }
            let outside = [-a * T::lit(0.5), a, a * T::lit(1.5)];
            for &s in &outside {
                if spec.kernel_entry(l, m, s, T::lit(0.5)) != T::zero() {
                    violations.push(format!("kernel ({l},{m}) is nonzero at lag {s} outside [0, A)"));
                }
            }
        }
    }

    let gamma = gamma_plus(spec)?;
    if !(gamma.radius < T::one()) {
        violations.push(format!(
            "spectral radius {} of the branching matrix is not below 1",
            gamma.radius
        ));
    }

    Ok(ValidationReport {
        family: spec.family_tag().to_string(),
        baseline_min,
        baseline_max,
        kernel_min,
        kernel_max,
        passes: violations.is_empty(),
        gamma,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, Family, ModelConfig};

    fn unchecked(family: Family, d: usize, a: f64) -> ModelSpec<f64> {
        ModelSpec::new_unchecked(ModelConfig {
            d,
            support: a,
            horizon: 100.0,
            family,
        })
        .unwrap()
    }

    #[test]
    fn box_kernel_passes_with_radius_half() {
        let spec = unchecked(
            Family::Constant {
                nu: vec![1.0],
                kernel_height: Some(vec![vec![0.5]]),
            },
            1,
            1.0,
        );
        let rep = validate_model(&spec, 64).unwrap();
        assert!(rep.passes, "{:?}", rep.violations);
        assert!((rep.gamma.radius - 0.5).abs() < 1e-9);
    }

    #[test]
    fn supercritical_box_fails() {
        let spec = unchecked(
            Family::Constant {
                nu: vec![1.0],
                kernel_height: Some(vec![vec![1.2]]),
            },
            1,
            1.0,
        );
        let rep = validate_model(&spec, 64).unwrap();
        assert!(!rep.passes);
        assert!((rep.gamma.radius - 1.2).abs() < 1e-9);
    }

    #[test]
    fn separable_exponential_kernel_radius() {
        // gamma has spectral radius 0.6; entries normalized to integrate to gamma.
        let gamma = [[0.4, 0.2], [0.2, 0.4]];
        let a = 3.0;
        let norm = 1.0 - (-2.0 * a as f64).exp();
        let alpha0: Vec<Vec<f64>> = gamma.iter().map(|r| r.iter().map(|g| g / norm).collect()).collect();
        let spec = unchecked(
            Family::ExpKernelTvAmplitude {
                nu: vec![0.5, 0.3],
                nu_slope: None,
                alpha0,
                alpha1: vec![vec![0.0; 2]; 2],
                beta: 2.0,
            },
            2,
            a,
        );
        let rep = validate_model(&spec, 32).unwrap();
        assert!(rep.passes);
        assert!((rep.gamma.radius - 0.6).abs() < 1e-9, "{}", rep.gamma.radius);
        for l in 0..2 {
            for m in 0..2 {
                assert!((rep.gamma.entries[(l, m)] - gamma[l][m]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn presets_pass_and_anti_presets_fail() {
        for (name, cfg) in presets::all() {
            let spec = ModelSpec::<f64>::new(cfg).unwrap();
            let rep = validate_model(&spec, 32).unwrap();
            assert!(rep.passes, "{name}: {:?}", rep.violations);
            let exact = spec.gamma_plus_exact();
            assert!(
                rep.gamma.entries.sub(&exact).max_abs() < 1e-8,
                "{name}: quadrature and closed-form branching matrices differ"
            );
        }
        for (name, cfg) in presets::anti_presets() {
            let spec = ModelSpec::<f64>::new_unchecked(cfg.clone()).unwrap();
            let rep = validate_model(&spec, 32).unwrap();
            assert!(!rep.passes, "{name} should fail validation");
            assert!(ModelSpec::<f64>::new(cfg).is_err(), "{name} should be rejected");
        }
    }
}
