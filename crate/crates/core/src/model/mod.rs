//! Locally stationary Hawkes model: baseline `nu(x)` and kernel `mu(s, x)`
//! evaluated at rescaled time `x = t / T`.
//!
//! Every built-in kernel entry factorizes as
//! `mu^{(l,m)}(s, x) = a^{(l,m)}(x) g^{(l,m)}(s)` with an amplitude `a` that is
//! affine in `x` and a lag shape `g` supported on `[0, A)`. The simulators,
//! the moment series and the thinning envelope all use this factorization.
//!
//! Rescaled time is frozen outside `[0, 1]`: `nu(x) = nu(0)` and
//! `mu(s, x) = mu(s, 0)` for `x < 0` (history before the observation
//! starts), and likewise `x > 1` is frozen at `1`.

mod family;
pub mod presets;
mod validate;

pub use family::{Family, ModelConfig, FAMILY_NAMES};
pub use validate::{gamma_plus, validate_model, GammaMatrix, ValidationReport};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
enum Baseline<T> {
    Affine { a: Vec<T>, b: Vec<T> },
    Sine { a: Vec<T>, b: Vec<T>, cycles: T },
}

#[derive(Clone, Debug)]
enum Shape<T> {
    Zero,
    /// Unit box on `[0, A)`.
    Box,
    /// Equal-width steps; `heights[p]` is a `d x d` matrix.
    Steps { heights: Vec<Matrix<T>>, width: T },
    /// `beta exp(-beta s)` on `[0, A)`.
    Exp { beta: T },
}

/// Immutable model specification.
#[derive(Clone, Debug)]
pub struct ModelSpec<T> {
    d: usize,
    support: T,
    horizon: T,
    baseline: Baseline<T>,
    amp0: Matrix<T>,
    amp1: Matrix<T>,
    shape: Shape<T>,
    config: ModelConfig,
}

fn invalid(family: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParams {
        family: family.to_string(),
        reason: reason.into(),
    }
}

fn vector<T: Scalar>(family: &str, name: &str, v: &[f64], d: usize) -> Result<Vec<T>> {
    if v.len() != d {
        return Err(invalid(family, format!("`{name}` has length {} but d = {d}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(family, format!("`{name}` has non-finite entries")));
    }
    Ok(v.iter().map(|&x| T::lit(x)).collect())
}

fn matrix<T: Scalar>(family: &str, name: &str, rows: &[Vec<f64>], d: usize) -> Result<Matrix<T>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(family, format!("`{name}` must be {d} x {d}")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(family, format!("`{name}` has non-finite entries")));
    }
    Matrix::from_f64_rows(rows)
}

impl<T: Scalar> ModelSpec<T> {
    /// Builds a model and rejects parameters outside the family bounds or
    /// with a branching matrix of spectral radius `>= 1`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let spec = Self::new_unchecked(config)?;
        spec.check_bounds()?;
        let radius = spectral_radius(&spec.gamma_plus_exact())?;
        if radius >= T::one() {
            return Err(Error::Supercritical {
                radius: radius.as_f64(),
            });
        }
        Ok(spec)
    }

    /// Builds a model checking only shapes and dimensions, so that invalid
    /// models can still be constructed and reported on by [`validate_model`].
    pub fn new_unchecked(config: ModelConfig) -> Result<Self> {
        let d = config.d;
        let fam = config.family.name();
        if d == 0 {
            return Err(invalid(fam, "d must be positive"));
        }
        if !(config.support > 0.0 && config.support.is_finite()) {
            return Err(invalid(fam, "A must be positive and finite"));
        }
        if !(config.horizon > 0.0 && config.horizon.is_finite()) {
            return Err(invalid(fam, "T must be positive and finite"));
        }
        let zeros = Matrix::zeros(d, d);
        let box_kernel = |h: &Option<Vec<Vec<f64>>>| -> Result<(Matrix<T>, Shape<T>)> {
            match h {
                Some(rows) => Ok((matrix(fam, "kernel_height", rows, d)?, Shape::Box)),
                None => Ok((Matrix::zeros(d, d), Shape::Zero)),
            }
        };
        let (baseline, amp0, amp1, shape) = match &config.family {
            Family::Constant { nu, kernel_height } => {
                let (amp0, shape) = box_kernel(kernel_height)?;
                let a = vector(fam, "nu", nu, d)?;
                (Baseline::Affine { a, b: vec![T::zero(); d] }, amp0, zeros, shape)
            }
            Family::LinearBaseline { a, b, kernel_height } => {
                let (amp0, shape) = box_kernel(kernel_height)?;
                let baseline = Baseline::Affine {
                    a: vector(fam, "a", a, d)?,
                    b: vector(fam, "b", b, d)?,
                };
                (baseline, amp0, zeros, shape)
            }
            Family::SineBaseline {
                a,
                b,
                cycles,
                kernel_height,
            } => {
                let (amp0, shape) = box_kernel(kernel_height)?;
                if !cycles.is_finite() {
                    return Err(invalid(fam, "`cycles` must be finite"));
                }
                let baseline = Baseline::Sine {
                    a: vector(fam, "a", a, d)?,
                    b: vector(fam, "b", b, d)?,
                    cycles: T::lit(*cycles),
                };
                (baseline, amp0, zeros, shape)
            }
            Family::ExpKernelTvAmplitude {
                nu,
                nu_slope,
                alpha0,
                alpha1,
                beta,
            } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(invalid(fam, "beta must be positive"));
                }
                let slope = match nu_slope {
                    Some(s) => vector(fam, "nu_slope", s, d)?,
                    None => vec![T::zero(); d],
                };
                let baseline = Baseline::Affine {
                    a: vector(fam, "nu", nu, d)?,
                    b: slope,
                };
                (
                    baseline,
                    matrix(fam, "alpha0", alpha0, d)?,
                    matrix(fam, "alpha1", alpha1, d)?,
                    Shape::Exp { beta: T::lit(*beta) },
                )
            }
            Family::PiecewiseConstKernel { nu, heights } => {
                if heights.is_empty() {
                    return Err(invalid(fam, "`heights` needs at least one piece"));
                }
                let hs = heights
                    .iter()
                    .map(|h| matrix(fam, "heights", h, d))
                    .collect::<Result<Vec<_>>>()?;
                let width = T::lit(config.support) / T::of_usize(hs.len());
                let a = vector(fam, "nu", nu, d)?;
                (
                    Baseline::Affine { a, b: vec![T::zero(); d] },
                    Matrix::from_fn(d, d, |_, _| T::one()),
                    zeros,
                    Shape::Steps { heights: hs, width },
                )
            }
        };
        Ok(Self {
            d,
            support: T::lit(config.support),
            horizon: T::lit(config.horizon),
            baseline,
            amp0,
            amp1,
            shape,
            config,
        })
    }

    fn check_bounds(&self) -> Result<()> {
        let fam = self.config.family.name();
        for m in 0..self.d {
            let low = match &self.baseline {
                Baseline::Affine { a, b } => a[m].min(a[m] + b[m]),
                Baseline::Sine { a, b, .. } => a[m] - b[m].abs(),
            };
            if !(low > T::zero()) {
                return Err(invalid(fam, format!("baseline {m} is not bounded away from 0")));
            }
        }
        for l in 0..self.d {
            for m in 0..self.d {
                let a0 = self.amp0[(l, m)];
                if a0 < T::zero() || a0 + self.amp1[(l, m)] < T::zero() {
                    return Err(invalid(fam, format!("kernel ({l},{m}) amplitude is negative")));
                }
                if let Shape::Steps { heights, .. } = &self.shape {
                    if heights.iter().any(|h| h[(l, m)] < T::zero()) {
                        return Err(invalid(fam, format!("kernel ({l},{m}) has a negative step")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Kernel support length `A`.
    pub fn support(&self) -> T {
        self.support
    }

    /// Observation horizon `T`.
    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn family_tag(&self) -> &'static str {
        self.config.family.name()
    }

    /// Same parameter functions observed over a different horizon.
    pub fn with_horizon(&self, horizon: T) -> Self {
        let mut out = self.clone();
        out.horizon = horizon;
        out.config.horizon = horizon.as_f64();
        out
    }

    /// True when neither the baseline nor the kernel depends on `x`.
    pub fn is_time_invariant(&self) -> bool {
        let flat_baseline = match &self.baseline {
            Baseline::Affine { b, .. } | Baseline::Sine { b, .. } => b.iter().all(|v| *v == T::zero()),
        };
        flat_baseline && self.amp1.as_slice().iter().all(|v| *v == T::zero())
    }

    #[inline]
    fn freeze(x: T) -> T {
        x.max(T::zero()).min(T::one())
    }

    pub fn baseline_at(&self, m: usize, x: T) -> T {
        let x = Self::freeze(x);
        match &self.baseline {
            Baseline::Affine { a, b } => a[m] + b[m] * x,
            Baseline::Sine { a, b, cycles } => {
                a[m] + b[m] * (T::lit(2.0) * T::PI() * *cycles * x).sin()
            }
        }
    }

    pub fn baseline(&self, x: T) -> Vec<T> {
        (0..self.d).map(|m| self.baseline_at(m, x)).collect()
    }

    /// Upper bound of `nu^{(m)}` over all rescaled times.
    pub fn baseline_sup(&self, m: usize) -> T {
        match &self.baseline {
            Baseline::Affine { a, b } => a[m].max(a[m] + b[m]),
            Baseline::Sine { a, b, .. } => a[m] + b[m].abs(),
        }
    }

    /// Integral of `nu^{(m)}` over `x in [0, 1]`.
    pub fn baseline_mean(&self, m: usize) -> T {
        match &self.baseline {
            Baseline::Affine { a, b } => a[m] + b[m] / T::lit(2.0),
            Baseline::Sine { a, b, cycles } => {
                if *cycles == T::zero() {
                    a[m]
                } else {
                    let w = T::lit(2.0) * T::PI() * *cycles;
                    a[m] + b[m] * (T::one() - w.cos()) / w
                }
            }
        }
    }

    /// Amplitude factor `a^{(l,m)}(x)`.
    #[inline]
    pub fn amplitude(&self, l: usize, m: usize, x: T) -> T {
        self.amp0[(l, m)] + self.amp1[(l, m)] * Self::freeze(x)
    }

    /// `sup_x a^{(l,m)}(x)`; the amplitude is affine so the supremum sits at
    /// an end of `[0, 1]`.
    pub fn amplitude_sup(&self, l: usize, m: usize) -> T {
        let a0 = self.amp0[(l, m)];
        a0.max(a0 + self.amp1[(l, m)])
    }

    /// Lag shape `g^{(l,m)}(s)`, zero outside `[0, A)`.
    #[inline]
    pub fn shape(&self, l: usize, m: usize, s: T) -> T {
        if !(s >= T::zero() && s < self.support) {
            return T::zero();
        }
        match &self.shape {
            Shape::Zero => T::zero(),
            Shape::Box => T::one(),
            Shape::Steps { heights, width } => {
                let p = (s / *width).to_usize().unwrap_or(0).min(heights.len() - 1);
                heights[p][(l, m)]
            }
            Shape::Exp { beta } => *beta * (-*beta * s).exp(),
        }
    }

    /// `int g^{(l,m)}(s) ds` over `[a, b]`, in closed form.
    pub fn shape_integral(&self, l: usize, m: usize, a: T, b: T) -> T {
        let a = a.max(T::zero());
        let b = b.min(self.support);
        if b <= a {
            return T::zero();
        }
        match &self.shape {
            Shape::Zero => T::zero(),
            Shape::Box => b - a,
            Shape::Steps { heights, width } => heights
                .iter()
                .enumerate()
                .map(|(p, h)| {
                    let lo = *width * T::of_usize(p);
                    let hi = if p + 1 == heights.len() {
                        self.support
                    } else {
                        *width * T::of_usize(p + 1)
                    };
                    let overlap = (b.min(hi) - a.max(lo)).max(T::zero());
                    h[(l, m)] * overlap
                })
                .sum(),
            Shape::Exp { beta } => (-*beta * a).exp() - (-*beta * b).exp(),
        }
    }

    pub fn shape_mass(&self, l: usize, m: usize) -> T {
        self.shape_integral(l, m, T::zero(), self.support)
    }

    pub fn shape_max(&self, l: usize, m: usize) -> T {
        match &self.shape {
            Shape::Zero => T::zero(),
            Shape::Box => T::one(),
            Shape::Steps { heights, .. } => heights.iter().fold(T::zero(), |acc, h| acc.max(h[(l, m)])),
            Shape::Exp { beta } => *beta,
        }
    }

    /// Lags where some lag shape may jump (includes `0` and `A`).
    pub fn shape_breakpoints(&self) -> Vec<T> {
        match &self.shape {
            Shape::Steps { heights, width } => {
                let mut v: Vec<T> = (0..heights.len()).map(|p| *width * T::of_usize(p)).collect();
                v.push(self.support);
                v
            }
            _ => vec![T::zero(), self.support],
        }
    }

    /// Draws a lag from the density `g^{(l,m)} / mass`.
    ///
    /// # Panics
    /// If the shape has zero mass.
    pub fn sample_shape<R: Rng + ?Sized>(&self, l: usize, m: usize, rng: &mut R) -> T {
        let u = T::lit(rng.random::<f64>());
        match &self.shape {
            Shape::Zero => panic!("cannot sample a zero kernel"),
            Shape::Box => u * self.support,
            Shape::Steps { heights, width } => {
                let mass = self.shape_mass(l, m);
                assert!(mass > T::zero(), "cannot sample a zero kernel");
                let mut target = u * mass;
                let last = heights.len() - 1;
                for (p, h) in heights.iter().enumerate() {
                    let hi = if p == last {
                        self.support
                    } else {
                        *width * T::of_usize(p + 1)
                    };
                    let lo = *width * T::of_usize(p);
                    let piece = h[(l, m)] * (hi - lo);
                    if target < piece || p == last {
                        let v = T::lit(rng.random::<f64>());
                        return (lo + v * (hi - lo)).min(hi);
                    }
                    target -= piece;
                }
                unreachable!()
            }
            Shape::Exp { beta } => {
                let tail = T::one() - (-*beta * self.support).exp();
                let s = -(T::one() - u * tail).ln() / *beta;
                s.min(self.support)
            }
        }
    }

    /// Kernel entry `mu^{(l,m)}(s, x)`.
    #[inline]
    pub fn kernel_entry(&self, l: usize, m: usize, s: T, x: T) -> T {
        let g = self.shape(l, m, s);
        if g == T::zero() {
            return T::zero();
        }
        self.amplitude(l, m, x) * g
    }

    pub fn kernel(&self, s: T, x: T) -> Matrix<T> {
        Matrix::from_fn(self.d, self.d, |l, m| self.kernel_entry(l, m, s, x))
    }

    /// Dominating kernel `sup_x mu^{(l,m)}(s, x)`.
    pub fn envelope(&self, l: usize, m: usize, s: T) -> T {
        self.amplitude_sup(l, m) * self.shape(l, m, s)
    }

    /// `sup_s` of the dominating kernel.
    pub fn envelope_max(&self, l: usize, m: usize) -> T {
        self.amplitude_sup(l, m) * self.shape_max(l, m)
    }

    /// Branching matrix of the dominating kernel, `int sup_x mu(s, x) ds`,
    /// in closed form.
    pub fn gamma_plus_exact(&self) -> Matrix<T> {
        Matrix::from_fn(self.d, self.d, |l, m| {
            self.amplitude_sup(l, m) * self.shape_mass(l, m)
        })
    }

    /// Branching matrix of the kernel frozen at rescaled time `x`.
    pub fn branching_at(&self, x: T) -> Matrix<T> {
        Matrix::from_fn(self.d, self.d, |l, m| {
            self.amplitude(l, m, x) * self.shape_mass(l, m)
        })
    }
}

/// Builds a built-in family by name, rejecting unknown names, parameters
/// outside the family bounds and supercritical parameter choices.
pub fn builtin_family<T: Scalar>(
    name: &str,
    d: usize,
    support: f64,
    horizon: f64,
    params: &serde_json::Value,
) -> Result<ModelSpec<T>> {
    let family = Family::from_name(name, params)?;
    ModelSpec::new(ModelConfig {
        d,
        support,
        horizon,
        family,
    })
}
