//! Assembly of the Gram matrix `Delta` and the vector `tau`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundaryMode, EstimatorConfig, SmoothingKernel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::simulate::EventStream;
use crate::splines::{BasisParams, SplineBasis};

/// Quadrature nodes handled per parallel chunk. Partial sums are reduced in
/// chunk order, so results do not depend on the thread count.
const CHUNK_NODES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    /// Integration window actually used, in absolute time.
    pub window_start: f64,
    pub window_end: f64,
    /// `int K` over the window in `z` units; 1 unless truncated.
    pub kernel_mass: f64,
    pub quad_step: f64,
    pub nodes: usize,
    /// Target events inside the window.
    pub target_events: usize,
    /// Events of any type that enter some feature value.
    pub history_events: usize,
    /// True when no event enters the features; the spline block is then zero.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct DesignSystem<T> {
    pub delta: Matrix<T>,
    pub tau: Vec<T>,
    pub k_order: usize,
    pub basis: BasisParams,
    pub diagnostics: DesignDiagnostics,
}

impl<T: Scalar> DesignSystem<T> {
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// `rho(theta) = -2 tau^T theta + theta^T Delta theta`.
    pub fn objective(&self, theta: &[T]) -> T {
        let quad = crate::linalg::dot(theta, &self.delta.mul_vec(theta));
        quad - T::lit(2.0) * crate::linalg::dot(&self.tau, theta)
    }
}

/// Weighting of the integration window.
#[derive(Clone, Copy)]
struct Window<T> {
    start: T,
    end: T,
    /// Centre and half-width of the smoothing kernel; `None` for uniform
    /// weight `1 / scale` over the window.
    center: T,
    half: T,
    kernel: Option<SmoothingKernel>,
    /// Every weight is divided by this.
    scale: T,
}

impl<T: Scalar> Window<T> {
    #[inline]
    fn z(&self, t: T) -> T {
        if self.kernel.is_some() {
            (t - self.center) / self.half
        } else {
            T::zero()
        }
    }

    #[inline]
    fn weight(&self, t: T) -> T {
        match self.kernel {
            Some(k) => T::lit(k.eval(self.z(t).as_f64())) / self.scale,
            None => T::one() / self.scale,
        }
    }
}

/// Full feature vector `f(t)` (length `(1 + J) K`, index `j * K + k`) from
/// the events strictly inside `(t - A, t)`, with polynomial variable `z`.
pub fn features_at<T: Scalar>(
    basis: &SplineBasis<T>,
    events: &EventStream<T>,
    t: T,
    z: T,
    k_order: usize,
) -> Vec<T> {
    let mut g = vec![T::zero(); 1 + basis.len()];
    g[0] = T::one();
    let mut buf = [T::zero(); 32];
    for (s, m) in events.iter() {
        let lag = t - s;
        if lag > T::zero() && lag < basis.support() {
            if let Some(first) = basis.nonzero(lag, &mut buf) {
                for r in 0..basis.order() {
                    g[1 + m * basis.scalar_len() + first + r] += buf[r];
                }
            }
        }
    }
    let mut f = vec![T::zero(); g.len() * k_order];
    for (j, &gj) in g.iter().enumerate() {
        let mut p = T::one();
        for k in 0..k_order {
            f[j * k_order + k] = gj * p;
            p *= z;
        }
    }
    f
}

/// Sparse feature builder reused across nodes.
struct Features<'a, T> {
    basis: &'a SplineBasis<T>,
    times: &'a [T],
    comps: &'a [usize],
    k_order: usize,
    /// Dense `g` (baseline + splines) and its nonzero positions.
    g: Vec<T>,
    touched: Vec<bool>,
    nz: Vec<usize>,
    zpow: Vec<T>,
}

impl<'a, T: Scalar> Features<'a, T> {
    fn new(basis: &'a SplineBasis<T>, events: &'a EventStream<T>, k_order: usize) -> Self {
        let n = 1 + basis.len();
        Self {
            basis,
            times: &events.times,
            comps: &events.components,
            k_order,
            g: vec![T::zero(); n],
            touched: vec![false; n],
            nz: Vec::with_capacity(n),
            zpow: vec![T::zero(); k_order],
        }
    }

    /// Fills `g` and `nz` (sorted) for time `t`.
    fn load(&mut self, t: T, z: T) {
        for &j in &self.nz {
            self.g[j] = T::zero();
            self.touched[j] = false;
        }
        self.nz.clear();
        self.g[0] = T::one();
        self.touched[0] = true;
        self.nz.push(0);
        let a = self.basis.support();
        let lo = self.times.partition_point(|&s| s <= t - a);
        let hi = self.times.partition_point(|&s| s < t);
        let js = self.basis.scalar_len();
        let mut buf = [T::zero(); 32];
        for e in lo..hi {
            let lag = t - self.times[e];
            if !(lag > T::zero() && lag < a) {
                continue;
            }
            if let Some(first) = self.basis.nonzero(lag, &mut buf) {
                let base = 1 + self.comps[e] * js + first;
                for r in 0..self.basis.order() {
                    let j = base + r;
                    self.g[j] += buf[r];
                    if !self.touched[j] {
                        self.touched[j] = true;
                        self.nz.push(j);
                    }
                }
            }
        }
        self.nz.sort_unstable();
        let mut p = T::one();
        for k in 0..self.k_order {
            self.zpow[k] = p;
            p *= z;
        }
    }

    /// Adds `w f f^T` to the packed upper triangle of a `dim x dim` matrix.
    fn add_outer(&self, w: T, dim: usize, upper: &mut [T]) {
        let kk = self.k_order;
        for (ia, &ja) in self.nz.iter().enumerate() {
            let ga = w * self.g[ja];
            for &jb in &self.nz[ia..] {
                let gab = ga * self.g[jb];
                for k1 in 0..kk {
                    let a = ja * kk + k1;
                    let v = gab * self.zpow[k1];
                    let k2_start = if ja == jb { k1 } else { 0 };
                    for k2 in k2_start..kk {
                        let b = jb * kk + k2;
                        upper[packed(a, b, dim)] += v * self.zpow[k2];
                    }
                }
            }
        }
    }

    fn add_vec(&self, w: T, out: &mut [T]) {
        let kk = self.k_order;
        for &j in &self.nz {
            let gj = w * self.g[j];
            for k in 0..kk {
                out[j * kk + k] += gj * self.zpow[k];
            }
        }
    }
}

/// Row-major index of `(a, b)`, `a <= b`, in a packed upper triangle.
#[inline]
fn packed(a: usize, b: usize, dim: usize) -> usize {
    a * dim - a * (a + 1) / 2 + b
}

fn assemble<T: Scalar>(
    events: &EventStream<T>,
    basis: &SplineBasis<T>,
    target: usize,
    k_order: usize,
    win: Window<T>,
    step: T,
) -> DesignSystem<T> {
    let dim = (1 + basis.len()) * k_order;
    let len = win.end - win.start;
    let nodes = (len / step).ceil().to_usize().unwrap_or(1).max(1);
    let h = len / T::of_usize(nodes);
    let chunks = nodes.div_ceil(CHUNK_NODES);
    let tri = dim * (dim + 1) / 2;

    let partials: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut feats = Features::new(basis, events, k_order);
            let mut upper = vec![T::zero(); tri];
            for i in c * CHUNK_NODES..((c + 1) * CHUNK_NODES).min(nodes) {
                let t = win.start + h * (T::of_usize(i) + T::lit(0.5));
                let w = h * win.weight(t);
                if w == T::zero() {
                    continue;
                }
                feats.load(t, win.z(t));
                feats.add_outer(w, dim, &mut upper);
            }
            upper
        })
        .collect();
    let mut upper = vec![T::zero(); tri];
    for p in &partials {
        for (u, v) in upper.iter_mut().zip(p) {
            *u += *v;
        }
    }
    let mut delta = Matrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = upper[packed(a, b, dim)];
            delta[(a, b)] = v;
            delta[(b, a)] = v;
        }
    }

    let mut tau = vec![T::zero(); dim];
    let mut feats = Features::new(basis, events, k_order);
    let lo = events.lower_bound(win.start);
    let hi = events.upper_bound(win.end);
    let mut target_events = 0;
    for e in lo..hi {
        if events.components[e] != target {
            continue;
        }
        let t = events.times[e];
        target_events += 1;
        let w = win.weight(t);
        if w == T::zero() {
            continue;
        }
        feats.load(t, win.z(t));
        feats.add_vec(w, &mut tau);
    }

    let history_events = {
        let lo = events.times.partition_point(|&s| s <= win.start - basis.support());
        let hi = events.lower_bound(win.end);
        hi.saturating_sub(lo)
    };
    let kernel_mass = match win.kernel {
        Some(k) => {
            let (zl, zh) = (win.z(win.start).as_f64(), win.z(win.end).as_f64());
            k.cdf(zh) - k.cdf(zl)
        }
        None => 1.0,
    };
    DesignSystem {
        delta,
        tau,
        k_order,
        basis: basis.params(),
        diagnostics: DesignDiagnostics {
            window_start: win.start.as_f64(),
            window_end: win.end.as_f64(),
            kernel_mass,
            quad_step: h.as_f64(),
            nodes,
            target_events,
            history_events,
            degenerate: history_events == 0,
        },
    }
}

fn check_basis<T: Scalar>(events: &EventStream<T>, basis: &SplineBasis<T>, target: usize) -> Result<()> {
    if basis.components() != events.d {
        return Err(Error::InvalidBasis(format!(
            "basis has {} components but the events have d = {}",
            basis.components(),
            events.d
        )));
    }
    if target >= events.d {
        return Err(Error::Config(format!(
            "target component {target} out of range for d = {}",
            events.d
        )));
    }
    Ok(())
}

/// Localized design around `t0 = x0 T` with bandwidth `T h`:
/// `Delta = (1 / Th) int f f^T K(z) dt` by the midpoint rule and
/// `tau = (1 / Th) sum_{target events} f K(z)`.
///
/// Only events in `(t0 - Th - A, t0 + Th]` are read.
pub fn assemble_design<T: Scalar>(
    events: &EventStream<T>,
    basis: &SplineBasis<T>,
    cfg: &EstimatorConfig,
) -> Result<DesignSystem<T>> {
    check_basis(events, basis, cfg.target)?;
    if !(cfg.x0 > 0.0 && cfg.x0 < 1.0) {
        return Err(Error::Config(format!("x0 = {} must lie in (0, 1)", cfg.x0)));
    }
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::Config(format!("bandwidth h = {} must be positive", cfg.h)));
    }
    if cfg.k_order == 0 {
        return Err(Error::Config("k_order must be at least 1".into()));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(Error::Config(format!("ridge = {} must be non-negative", cfg.ridge)));
    }
    let horizon = events.horizon;
    let a = basis.support();
    let center = T::lit(cfg.x0) * horizon;
    let half = T::lit(cfg.h) * horizon;
    let (start, end) = (center - half, center + half);
    // Features need a full history of length A behind the window.
    let lo = T::zero().max(events.warmup_start + a);
    let hi = horizon;
    let (start, end, scale) = match cfg.boundary {
        BoundaryMode::Strict => {
            if start < lo || end > hi {
                return Err(Error::WindowOutOfRange {
                    start: start.as_f64(),
                    end: end.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
            (start, end, half)
        }
        BoundaryMode::Truncate => {
            let (s, e) = (start.max(lo), end.min(hi));
            if !(e > s) {
                return Err(Error::WindowOutOfRange {
                    start: start.as_f64(),
                    end: end.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
            let zl = ((s - center) / half).as_f64();
            let zh = ((e - center) / half).as_f64();
            let mass = cfg.kernel.cdf(zh) - cfg.kernel.cdf(zl);
            if !(mass > 0.0) {
                return Err(Error::Config("smoothing kernel has no mass on the truncated window".into()));
            }
            (s, e, half * T::lit(mass))
        }
    };
    let step = match cfg.quad_step {
        Some(s) if s > 0.0 => T::lit(s),
        Some(s) => return Err(Error::Config(format!("quadrature step {s} must be positive"))),
        None => T::lit(cfg.default_quad_step(horizon.as_f64())),
    };
    let win = Window {
        start,
        end,
        center,
        half,
        kernel: Some(cfg.kernel),
        scale,
    };
    Ok(assemble(events, basis, cfg.target, cfg.k_order, win, step))
}

/// Stationary design: uniform weight `1 / T` over `[A, T]`, `K = 1`.
pub fn assemble_stationary<T: Scalar>(
    events: &EventStream<T>,
    basis: &SplineBasis<T>,
    target: usize,
    quad_step: Option<f64>,
) -> Result<DesignSystem<T>> {
    check_basis(events, basis, target)?;
    let a = basis.support();
    let horizon = events.horizon;
    if !(horizon > a) {
        return Err(Error::WindowOutOfRange {
            start: a.as_f64(),
            end: horizon.as_f64(),
            lo: 0.0,
            hi: horizon.as_f64(),
        });
    }
    let step = match quad_step {
        Some(s) if s > 0.0 => T::lit(s),
        Some(s) => return Err(Error::Config(format!("quadrature step {s} must be positive"))),
        None => a / T::of_usize(16 * basis.scalar_len()),
    };
    let win = Window {
        start: a,
        end: horizon,
        center: T::zero(),
        half: T::one(),
        kernel: None,
        scale: horizon,
    };
    Ok(assemble(events, basis, target, 1, win, step))
}
