//! Named parameter presets used by the tests, the experiment harness and the
//! files under `presets/`.

use super::{Family, ModelConfig};

/// Homogeneous Poisson process, `nu = 1`.
pub fn poisson() -> ModelConfig {
    ModelConfig {
        d: 1,
        support: 1.0,
        horizon: 1000.0,
        family: Family::Constant {
            nu: vec![1.0],
            kernel_height: None,
        },
    }
}

/// Stationary univariate box kernel: `nu = 0.5`, `mu = 0.5` on `[0, 1)`,
/// so the mean intensity is `0.5 / (1 - 0.5) = 1`.
pub fn stationary1() -> ModelConfig {
    ModelConfig {
        d: 1,
        support: 1.0,
        horizon: 5000.0,
        family: Family::Constant {
            nu: vec![0.5],
            kernel_height: Some(vec![vec![0.5]]),
        },
    }
}

/// Stationary bivariate exponential kernel with branching matrix
/// `[[0.4, 0.2], [0.2, 0.4]]` (spectral radius 0.6).
pub fn preset2() -> ModelConfig {
    let support = 3.0;
    let beta = 2.0;
    let norm = 1.0 - (-beta * support as f64).exp();
    let gamma = [[0.4, 0.2], [0.2, 0.4]];
    ModelConfig {
        d: 2,
        support,
        horizon: 2000.0,
        family: Family::ExpKernelTvAmplitude {
            nu: vec![0.5, 0.3],
            nu_slope: None,
            alpha0: gamma.iter().map(|r| r.iter().map(|g| g / norm).collect()).collect(),
            alpha1: vec![vec![0.0; 2]; 2],
            beta,
        },
    }
}

/// Bivariate model with time-varying baseline and kernel amplitudes.
pub fn preset2_tv() -> ModelConfig {
    ModelConfig {
        d: 2,
        support: 2.0,
        horizon: 2000.0,
        family: Family::ExpKernelTvAmplitude {
            nu: vec![0.4, 0.3],
            nu_slope: Some(vec![0.4, -0.1]),
            alpha0: vec![vec![0.3, 0.1], vec![0.2, 0.2]],
            alpha1: vec![vec![0.2, 0.0], vec![-0.1, 0.1]],
            beta: 3.0,
        },
    }
}

/// Stationary univariate step kernel (0.6 on `[0, 0.5)`, 0.2 on `[0.5, 1)`),
/// exactly representable by a piecewise-constant spline basis with knots at
/// multiples of 0.5.
pub fn piecewise() -> ModelConfig {
    ModelConfig {
        d: 1,
        support: 1.0,
        horizon: 20000.0,
        family: Family::PiecewiseConstKernel {
            nu: vec![0.5],
            heights: vec![vec![vec![0.6]], vec![vec![0.2]]],
        },
    }
}

/// Univariate locally stationary model: `nu(x) = 0.8 + 0.4 x`,
/// `mu(s, x) = (0.4 + 0.2 x) 2 exp(-2 s)` on `[0, 3)`.
pub fn exp_tv() -> ModelConfig {
    ModelConfig {
        d: 1,
        support: 3.0,
        horizon: 20000.0,
        family: Family::ExpKernelTvAmplitude {
            nu: vec![0.8],
            nu_slope: Some(vec![0.4]),
            alpha0: vec![vec![0.4]],
            alpha1: vec![vec![0.2]],
            beta: 2.0,
        },
    }
}

/// Sinusoidal baseline with a box kernel.
pub fn sine() -> ModelConfig {
    ModelConfig {
        d: 1,
        support: 1.0,
        horizon: 2000.0,
        family: Family::SineBaseline {
            a: vec![1.0],
            b: vec![0.5],
            cycles: 1.0,
            kernel_height: Some(vec![vec![0.4]]),
        },
    }
}

pub fn all() -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("poisson", poisson()),
        ("stationary1", stationary1()),
        ("preset2", preset2()),
        ("preset2_tv", preset2_tv()),
        ("piecewise", piecewise()),
        ("exp_tv", exp_tv()),
        ("sine", sine()),
    ]
}

/// Parameter choices that violate the model assumptions.
pub fn anti_presets() -> Vec<(&'static str, ModelConfig)> {
    vec![
        (
            "supercritical",
            ModelConfig {
                d: 1,
                support: 1.0,
                horizon: 1000.0,
                family: Family::Constant {
                    nu: vec![1.0],
                    kernel_height: Some(vec![vec![1.2]]),
                },
            },
        ),
        (
            "vanishing_baseline",
            ModelConfig {
                d: 1,
                support: 1.0,
                horizon: 1000.0,
                family: Family::SineBaseline {
                    a: vec![0.2],
                    b: vec![0.5],
                    cycles: 1.0,
                    kernel_height: None,
                },
            },
        ),
        (
            "negative_kernel",
            ModelConfig {
                d: 1,
                support: 1.0,
                horizon: 1000.0,
                family: Family::ExpKernelTvAmplitude {
                    nu: vec![1.0],
                    nu_slope: None,
                    alpha0: vec![vec![0.2]],
                    alpha1: vec![vec![-0.5]],
                    beta: 1.0,
                },
            },
        ),
    ]
}

pub fn by_name(name: &str) -> Option<ModelConfig> {
    all()
        .into_iter()
        .chain(anti_presets())
        .find(|(n, _)| *n == name)
        .map(|(_, c)| c)
}
