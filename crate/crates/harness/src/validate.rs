//! Simulator-versus-moments and simulator-versus-simulator checks.

use lshawkes::moments::{compute_lambda, MomentOptions};
use lshawkes::simulate::{simulate, WARMUP_FACTOR};
use lshawkes::{Engine, EventStream, ModelConfig, ModelSpec, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::mean_var;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub base_seed: u64,
    pub engines: Vec<Engine>,
    /// Windows per component for the cross-engine count test.
    pub windows: usize,
    pub lambda_bins: usize,
    /// Multiplies the moment oracle; anything but 1 should fail the check.
    pub lambda_scale: f64,
    /// Covariance lags and bin width, in units of `A`.
    pub cov_lags: Vec<f64>,
    pub cov_width: f64,
    /// Spacing of covariance bin pairs within one path, in units of `A`.
    pub cov_stride: f64,
    pub z_limit: f64,
    /// Share of window cells that must pass in the cross-engine test.
    pub window_pass_fraction: f64,
    pub moment_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            base_seed: 0,
            engines: vec![Engine::Cluster, Engine::Thinning],
            windows: 10,
            lambda_bins: 20,
            lambda_scale: 1.0,
            cov_lags: vec![0.0, 0.5, 1.0],
            cov_width: 0.1,
            cov_stride: 10.0,
            z_limit: 4.0,
            window_pass_fraction: 0.95,
            moment_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellZ {
    pub label: String,
    pub estimate: f64,
    pub reference: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub cells: Vec<CellZ>,
    pub max_abs_z: f64,
    /// Share of cells with `|z| < z_limit`.
    pub fraction_within: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    fn from_cells(name: &str, cells: Vec<CellZ>, z_limit: f64, need: f64) -> Self {
        let within = cells.iter().filter(|c| c.z.abs() < z_limit).count();
        let fraction = if cells.is_empty() { 1.0 } else { within as f64 / cells.len() as f64 };
        let max_abs_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
        Self {
            name: name.to_string(),
            pass: fraction >= need && cells.iter().all(|c| c.z.is_finite()),
            cells,
            max_abs_z,
            fraction_within: fraction,
            note: String::new(),
        }
    }

    fn skipped(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            cells: Vec::new(),
            max_abs_z: 0.0,
            fraction_within: 1.0,
            pass: true,
            note: note.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub family: String,
    pub horizon: f64,
    pub replicates: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_ENGINES: &str = "engine_window_counts";
pub const CHECK_LAMBDA: &str = "lambda_bins";
pub const CHECK_COVARIANCE: &str = "bin_covariance";

/// Per-replicate summaries, so the event streams can be dropped right away.
struct PathStats {
    windows: Vec<f64>,
    bins: Vec<f64>,
    /// Mean over bin pairs of `(X - EX)(Y - EY)`, indexed `[lag][l * d + m]`.
    cov: Vec<Vec<f64>>,
}

fn z_of(diff: f64, var: f64) -> f64 {
    if var > 0.0 {
        diff / var.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Simulates `replicates` paths per engine and compares them with each other
/// and with the moment tables. Check failures are report content, not errors.
pub fn validate_pipeline(
    model_cfg: &ModelConfig,
    horizon: f64,
    replicates: usize,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let model = ModelSpec::new(model_cfg.with_horizon(horizon))?;
    let d = model.dim();
    let a = model.support();
    let warmup = WARMUP_FACTOR * a;
    let moment_opts = MomentOptions::with_tol(opts.moment_tol);

    // Lambda on bin edges and midpoints.
    let nb = opts.lambda_bins.max(1);
    let x_grid: Vec<f64> = (0..=2 * nb).map(|i| i as f64 / (2 * nb) as f64).collect();
    let table = compute_lambda(&model, &x_grid, &moment_opts)?;
    let bin_len = horizon / nb as f64;
    let expected_bins: Vec<f64> = (0..nb)
        .flat_map(|b| (0..d).map(move |m| (b, m)))
        .map(|(b, m)| {
            let (l0, l1, l2) = (table.lambda[2 * b][m], table.lambda[2 * b + 1][m], table.lambda[2 * b + 2][m]);
            opts.lambda_scale * bin_len * (l0 + 4.0 * l1 + l2) / 6.0
        })
        .collect();

    let stationary = model.is_time_invariant();
    let width = opts.cov_width * a;
    let lags: Vec<f64> = opts.cov_lags.iter().map(|l| l * a).collect();
    let max_lag = lags.iter().cloned().fold(0.0, f64::max);
    let stride = opts.cov_stride * a;
    let positions: Vec<f64> = if stationary {
        let mut v = Vec::new();
        let mut p = a;
        while p + max_lag + width < horizon {
            v.push(p);
            p += stride;
        }
        v
    } else {
        Vec::new()
    };
    let lam0 = table.lambda_at(0.5);
    let cov_reference: Vec<Vec<f64>> = if stationary && !positions.is_empty() {
        lags.iter()
            .map(|&lag| {
                let c = table.bin_count_covariance(positions[0], positions[0] + lag, width)?;
                Ok((0..d * d).map(|k| c[(k / d, k % d)]).collect())
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let win_len = horizon / opts.windows.max(1) as f64;
    let summarize = |ev: &EventStream| -> PathStats {
        let windows = (0..opts.windows)
            .flat_map(|w| (0..d).map(move |m| (w, m)))
            .map(|(w, m)| ev.count_in(m, w as f64 * win_len, (w + 1) as f64 * win_len) as f64)
            .collect();
        let bins = (0..nb)
            .flat_map(|b| (0..d).map(move |m| (b, m)))
            .map(|(b, m)| {
                let hi = if b + 1 == nb { f64::INFINITY } else { (b + 1) as f64 * bin_len };
                ev.count_in(m, b as f64 * bin_len, hi) as f64
            })
            .collect();
        let cov = lags
            .iter()
            .map(|&lag| {
                let mut acc = vec![0.0; d * d];
                for &p in &positions {
                    for l in 0..d {
                        let x = ev.count_in(l, p, p + width) as f64 - lam0[l] * width;
                        for m in 0..d {
                            let y = ev.count_in(m, p + lag, p + lag + width) as f64 - lam0[m] * width;
                            acc[l * d + m] += x * y;
                        }
                    }
                }
                acc.iter().map(|v| v / positions.len().max(1) as f64).collect()
            })
            .collect();
        PathStats { windows, bins, cov }
    };

    let mut per_engine: Vec<Vec<PathStats>> = Vec::new();
    for (e_idx, &engine) in opts.engines.iter().enumerate() {
        let stats: Vec<PathStats> = (0..replicates)
            .into_par_iter()
            .map(|r| -> Result<PathStats> {
                let stream = RngStream::new(opts.base_seed, ((e_idx as u64) << 32) + r as u64);
                let ev = simulate(engine, &model, horizon, warmup, stream)?;
                Ok(summarize(&ev))
            })
            .collect::<Result<_>>()?;
        per_engine.push(stats);
    }

    let mut checks = Vec::new();
    let column = |stats: &[PathStats], f: &dyn Fn(&PathStats) -> f64| -> (f64, f64, usize) {
        let v: Vec<f64> = stats.iter().map(f).collect();
        let (m, s2) = mean_var(&v);
        (m, s2, v.len())
    };

    if per_engine.len() >= 2 {
        let (a_stats, b_stats) = (&per_engine[0], &per_engine[1]);
        let cells = (0..opts.windows * d)
            .map(|c| {
                let (ma, va, na) = column(a_stats, &|s| s.windows[c]);
                let (mb, vb, nb) = column(b_stats, &|s| s.windows[c]);
                CellZ {
                    label: format!("window {} component {}", c / d, c % d),
                    estimate: ma,
                    reference: mb,
                    z: z_of(ma - mb, va / na as f64 + vb / nb as f64),
                }
            })
            .collect();
        checks.push(Check::from_cells(CHECK_ENGINES, cells, opts.z_limit, opts.window_pass_fraction));
    } else {
        checks.push(Check::skipped(CHECK_ENGINES, "needs two engines"));
    }

    let pooled: Vec<&PathStats> = per_engine.iter().flatten().collect();
    let pooled_col = |f: &dyn Fn(&PathStats) -> f64| -> (f64, f64, usize) {
        let v: Vec<f64> = pooled.iter().map(|s| f(s)).collect();
        let (m, s2) = mean_var(&v);
        (m, s2, v.len())
    };
    let cells = (0..nb * d)
        .map(|c| {
            let (m, v, n) = pooled_col(&|s| s.bins[c]);
            CellZ {
                label: format!("bin {} component {}", c / d, c % d),
                estimate: m,
                reference: expected_bins[c],
                z: z_of(m - expected_bins[c], v / n as f64),
            }
        })
        .collect();
    checks.push(Check::from_cells(CHECK_LAMBDA, cells, opts.z_limit, 1.0));

    if stationary && !positions.is_empty() {
        let mut cells = Vec::new();
        for (li, &lag) in lags.iter().enumerate() {
            for k in 0..d * d {
                let (m, v, n) = pooled_col(&|s| s.cov[li][k]);
                let reference = cov_reference[li][k];
                cells.push(CellZ {
                    label: format!("lag {lag} pair ({}, {})", k / d, k % d),
                    estimate: m,
                    reference,
                    z: z_of(m - reference, v / n as f64),
                });
            }
        }
        checks.push(Check::from_cells(CHECK_COVARIANCE, cells, opts.z_limit, 1.0));
    } else {
        checks.push(Check::skipped(CHECK_COVARIANCE, "model is not time-invariant"));
    }

    Ok(ValidationReport {
        family: model.family_tag().to_string(),
        horizon,
        replicates,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lshawkes::model::presets;

    #[test]
    fn poisson_passes_and_scaled_oracle_fails() {
        let cfg = presets::poisson();
        let opts = ValidationOptions {
            base_seed: 3,
            ..Default::default()
        };
        let report = validate_pipeline(&cfg, 500.0, 60, &opts).unwrap();
        assert!(report.pass, "{report:#?}");
        let scaled = ValidationOptions {
            lambda_scale: 1.1,
            ..opts
        };
        let report = validate_pipeline(&cfg, 500.0, 60, &scaled).unwrap();
        let lam = report.check(CHECK_LAMBDA).unwrap();
        assert!(!lam.pass && lam.max_abs_z > 4.0, "{}", lam.max_abs_z);
    }
}
