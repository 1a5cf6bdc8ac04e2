//! Replicated simulate-and-fit sweeps with resumable CSV reports.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use lshawkes::estimate::{fit_local, fit_stationary, ise, EstimatorConfig};
use lshawkes::simulate::simulate;
use lshawkes::splines::BasisParams;
use lshawkes::{ModelConfig, ModelSpec, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{rule_monotonicity, ExperimentConfig, FitMode, RuleMonotonicity};
use crate::error::{HarnessError, Result};
use crate::stats::{least_squares_slope, quantile};

pub const REPORT_HEADER: &str = "# hawkes-report v1";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// Replicates simulated per parallel batch.
const BATCH: usize = 16;

/// One `(T, replicate, x0)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t_idx: usize,
    pub horizon: f64,
    pub rep: usize,
    pub x0: f64,
    pub seed: u64,
    pub stream: u64,
    pub h: f64,
    pub js: usize,
    pub events: usize,
    pub nu_error: f64,
    pub ise_total: f64,
    /// Per-component ISE joined by `;`.
    pub ise_components: String,
    pub ridge_used: f64,
    pub min_eig: f64,
    /// Empty on success.
    pub error: String,
}

impl ReportRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub horizon: f64,
    pub x0: f64,
    pub h: f64,
    pub js: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub ise_median: f64,
    pub ise_iqr: f64,
    /// Median of `|nu_hat - nu(x0)|`.
    pub nu_error_median: f64,
    pub nu_error_iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub x0: f64,
    /// Slope of `log median ISE` against `log T`.
    pub ise_exponent: Option<f64>,
    /// Slope of `log median |nu_hat - nu|^2` against `log T`.
    pub nu_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub rates: Vec<RateFit>,
    pub rules: RuleMonotonicity,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
    pub report_path: PathBuf,
}

/// `(t_idx << 32) + rep`.
pub fn stream_id(t_idx: usize, rep: usize) -> u64 {
    ((t_idx as u64) << 32) + rep as u64
}

fn basis_params(model: &ModelConfig, js: usize, order: usize) -> BasisParams {
    BasisParams {
        support: model.support,
        order,
        js,
        d: model.d,
    }
}

/// Simulates one replicate and fits it at every `x0` in `wanted`.
fn run_replicate(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    t_idx: usize,
    rep: usize,
    wanted: &[usize],
) -> Vec<ReportRow> {
    let horizon = cfg.t_grid[t_idx];
    let h = cfg.h_rule.at(horizon);
    let js = cfg.js_at(horizon);
    let stream = stream_id(t_idx, rep);
    let blank = |x0: f64, error: String| ReportRow {
        t_idx,
        horizon,
        rep,
        x0,
        seed: cfg.base_seed,
        stream,
        h,
        js,
        events: 0,
        nu_error: f64::NAN,
        ise_total: f64::NAN,
        ise_components: String::new(),
        ridge_used: f64::NAN,
        min_eig: f64::NAN,
        error,
    };
    let tagged = |e: &dyn std::fmt::Display| e.to_string().replace([',', '\n', '"'], " ");
    let model = match ModelSpec::new(model_cfg.with_horizon(horizon)) {
        Ok(m) => m,
        Err(e) => return wanted.iter().map(|&i| blank(cfg.x0_list[i], tagged(&e))).collect(),
    };
    let warmup = cfg.warmup_factor * model.support();
    let events = match simulate(cfg.engine, &model, horizon, warmup, RngStream::new(cfg.base_seed, stream)) {
        Ok(ev) => ev,
        Err(e) => return wanted.iter().map(|&i| blank(cfg.x0_list[i], tagged(&e))).collect(),
    };
    let observed = events.observed().count();
    let stationary_fit = if cfg.fit == FitMode::Stationary {
        let mut est = EstimatorConfig::new(cfg.target, 0.5, 0.5, basis_params(model_cfg, js, cfg.order));
        est.ridge = cfg.ridge;
        est.quad_step = cfg.quad_step;
        Some(fit_stationary(&events, &est))
    } else {
        None
    };
    wanted
        .iter()
        .map(|&i| {
            let x0 = cfg.x0_list[i];
            let fitted = match &stationary_fit {
                Some(r) => r.as_ref().map(|f| f.clone()).map_err(|e| tagged(e)),
                None => {
                    let mut est = EstimatorConfig::new(cfg.target, x0, h, basis_params(model_cfg, js, cfg.order));
                    est.k_order = cfg.k_order;
                    est.kernel = cfg.kernel;
                    est.boundary = cfg.boundary;
                    est.ridge = cfg.ridge;
                    est.quad_step = cfg.quad_step;
                    fit_local(&events, &est).map_err(|e| tagged(&e))
                }
            };
            let fit = match fitted {
                Ok(f) => f,
                Err(e) => {
                    let mut row = blank(x0, e);
                    row.events = observed;
                    return row;
                }
            };
            let mut row = blank(x0, String::new());
            row.events = observed;
            row.ridge_used = fit.ridge_used;
            row.min_eig = fit.min_eig;
            match ise(&fit, &model, x0) {
                Ok(err) => {
                    row.nu_error = err.nu_error;
                    row.ise_total = err.total;
                    row.ise_components = err
                        .per_component
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(";");
                }
                Err(e) => row.error = tagged(&e),
            }
            row
        })
        .collect()
}

/// Reads the rows of an existing report, dropping a trailing partial line.
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(first)) if first == REPORT_HEADER => {}
        _ => {
            return Err(HarnessError::ReportMismatch {
                path: path.as_ref().display().to_string(),
                reason: format!("missing `{REPORT_HEADER}` header"),
            })
        }
    }
    let rest = std::fs::read_to_string(path.as_ref())?;
    let body = &rest[rest.find('\n').map_or(rest.len(), |i| i + 1)..];
    let complete = match body.rfind('\n') {
        Some(i) => &body[..=i],
        None => "",
    };
    let mut reader = csv::Reader::from_reader(complete.as_bytes());
    let mut rows = Vec::new();
    for r in reader.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

fn write_fresh_report(path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "{REPORT_HEADER}")?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t_idx", "horizon", "rep", "x0", "seed", "stream", "h", "js", "events", "nu_error", "ise_total",
        "ise_components", "ridge_used", "min_eig", "error",
    ])?;
    f.write_all(&w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?)?;
    Ok(())
}

fn append_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    let mut f = OpenOptions::new().append(true).open(path)?;
    f.write_all(&bytes)?;
    f.sync_data()?;
    Ok(())
}

/// Rewrites the report with exactly `rows` (used to drop a partial line).
fn rewrite_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_fresh_report(path)?;
    append_rows(path, rows)
}

/// Runs the sweep, writing `report.csv`, `summary.json` and `config.json`
/// under `cfg.outputs` (relative paths resolved against `base`). Rows already
/// present in the report are kept, so an interrupted run resumes where it
/// stopped and ends with the same files as an uninterrupted one.
pub fn run_experiment(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<ExperimentReport> {
    cfg.check()?;
    let model_cfg = cfg.model.resolve(base)?;
    ModelSpec::new(model_cfg.clone())?;
    if cfg.target >= model_cfg.d {
        return Err(HarnessError::Config(format!("target {} out of range for d = {}", cfg.target, model_cfg.d)));
    }
    let out = match base {
        Some(b) if cfg.outputs.is_relative() => b.join(&cfg.outputs),
        _ => cfg.outputs.clone(),
    };
    std::fs::create_dir_all(&out)?;
    let report_path = out.join(REPORT_FILE);
    let config_path = out.join(CONFIG_FILE);
    let config_text = cfg.to_json() + "\n";

    let mut rows = Vec::new();
    if report_path.exists() {
        let previous = std::fs::read_to_string(&config_path).unwrap_or_default();
        if previous != config_text {
            return Err(HarnessError::ReportMismatch {
                path: report_path.display().to_string(),
                reason: format!("{} differs from the current config", config_path.display()),
            });
        }
        rows = read_report(&report_path)?;
        rewrite_report(&report_path, &rows)?;
    } else {
        std::fs::write(&config_path, &config_text)?;
        write_fresh_report(&report_path)?;
    }

    // Expected row order: T, then replicate, then x0.
    let nx = cfg.x0_list.len();
    let keys: Vec<(usize, usize, usize)> = (0..cfg.t_grid.len())
        .flat_map(|t| (0..cfg.replicates).flat_map(move |r| (0..nx).map(move |i| (t, r, i))))
        .collect();
    for (row, &(t, r, i)) in rows.iter().zip(&keys) {
        if row.t_idx != t || row.rep != r || row.x0.to_bits() != cfg.x0_list[i].to_bits() {
            return Err(HarnessError::ReportMismatch {
                path: report_path.display().to_string(),
                reason: format!("row for T index {} rep {} is out of order", row.t_idx, row.rep),
            });
        }
    }
    let done = rows.len().min(keys.len());

    let pool = if cfg.workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        )
    } else {
        None
    };

    // Pending replicates with the x0 indices still missing.
    let mut pending: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for &(t, r, i) in &keys[done..] {
        match pending.last_mut() {
            Some((pt, pr, v)) if *pt == t && *pr == r => v.push(i),
            _ => pending.push((t, r, vec![i])),
        }
    }
    for batch in pending.chunks(BATCH) {
        let work = || -> Vec<Vec<ReportRow>> {
            batch
                .par_iter()
                .map(|(t, r, wanted)| run_replicate(cfg, &model_cfg, *t, *r, wanted))
                .collect()
        };
        let results = match &pool {
            Some(p) => p.install(work),
            None => work(),
        };
        let flat: Vec<ReportRow> = results.into_iter().flatten().collect();
        append_rows(&report_path, &flat)?;
        rows.extend(flat);
    }

    let summary = summarize(cfg, &rows);
    std::fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(ExperimentReport {
        rows,
        summary,
        report_path,
    })
}

/// Aggregates rows per `(T, x0)` and fits log-log rate exponents.
pub fn summarize(cfg: &ExperimentConfig, rows: &[ReportRow]) -> Summary {
    let mut cells = Vec::new();
    for (t_idx, &horizon) in cfg.t_grid.iter().enumerate() {
        for &x0 in &cfg.x0_list {
            let sel: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.t_idx == t_idx && r.x0.to_bits() == x0.to_bits())
                .collect();
            let ok: Vec<&&ReportRow> = sel.iter().filter(|r| r.ok()).collect();
            let mut ise: Vec<f64> = ok.iter().map(|r| r.ise_total).collect();
            let mut nu: Vec<f64> = ok.iter().map(|r| r.nu_error).collect();
            ise.sort_by(|a, b| a.total_cmp(b));
            nu.sort_by(|a, b| a.total_cmp(b));
            cells.push(CellSummary {
                horizon,
                x0,
                h: cfg.h_rule.at(horizon),
                js: cfg.js_at(horizon),
                n_ok: ok.len(),
                n_failed: sel.len() - ok.len(),
                ise_median: quantile(&ise, 0.5),
                ise_iqr: quantile(&ise, 0.75) - quantile(&ise, 0.25),
                nu_error_median: quantile(&nu, 0.5),
                nu_error_iqr: quantile(&nu, 0.75) - quantile(&nu, 0.25),
            });
        }
    }
    let rates = cfg
        .x0_list
        .iter()
        .map(|&x0| {
            let mine: Vec<&CellSummary> = cells.iter().filter(|c| c.x0.to_bits() == x0.to_bits()).collect();
            let fit = |f: &dyn Fn(&CellSummary) -> f64| {
                let pts: Vec<(f64, f64)> = mine
                    .iter()
                    .filter(|c| f(c) > 0.0 && f(c).is_finite())
                    .map(|c| (c.horizon.ln(), f(c).ln()))
                    .collect();
                least_squares_slope(&pts)
            };
            RateFit {
                x0,
                ise_exponent: fit(&|c| c.ise_median),
                nu_exponent: fit(&|c| c.nu_error_median * c.nu_error_median),
            }
        })
        .collect();
    Summary {
        cells,
        rates,
        rules: rule_monotonicity(cfg),
    }
}
