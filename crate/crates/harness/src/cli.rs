//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on usage errors, 2 on runtime errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lshawkes::estimate::{fit_local, fit_stationary, BoundaryMode, EstimatorConfig, SmoothingKernel};
use lshawkes::moments::{compute_lambda, unit_grid, MomentOptions};
use lshawkes::simulate::{simulate, WARMUP_FACTOR};
use lshawkes::splines::{project_truth, BasisParams};
use lshawkes::{Engine, EventStream, ModelConfig, ModelSpec, RngStream, SplineBasis};

use crate::config::{ExperimentConfig, ModelRef};
use crate::error::{HarnessError, Result};
use crate::experiment::run_experiment;
use crate::validate::{validate_pipeline, ValidationOptions};

#[derive(Debug, Parser)]
#[command(name = "lshawkes", version, about = "Simulate and estimate locally stationary Hawkes processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write an event file.
    Simulate(SimulateArgs),
    /// Fit one intensity row from an event file.
    Estimate(EstimateArgs),
    /// Tabulate the mean intensity (and optionally the resolvent).
    Moments(MomentsArgs),
    /// Run a replicated sweep from an experiment config.
    Experiment(ExperimentArgs),
    /// Check the simulators against each other and against the moments.
    Validate(ValidateArgs),
    /// Best basis approximation of the true kernel row.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model config file, or `preset:NAME`.
    #[arg(long)]
    pub model: String,
    /// Overrides the horizon in the model config.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelConfig> {
        let cfg = ModelRef::parse(&self.model).resolve(None)?;
        Ok(match self.horizon {
            Some(t) => cfg.with_horizon(t),
            None => cfg,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long, default_value = "cluster")]
    pub engine: Engine,
    /// Warm-up length; defaults to 20 A.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub h: f64,
    /// Splines per component.
    #[arg(long = "J", default_value_t = 8)]
    pub js: usize,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 1)]
    pub k_order: usize,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: SmoothingKernel,
    /// Component to estimate (1-based, as in event files).
    #[arg(long, default_value_t = 1)]
    pub target: usize,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long)]
    pub quad_step: Option<f64>,
    #[arg(long, default_value = "strict")]
    pub boundary: BoundaryMode,
    /// Time-invariant fit over `[A, T]`.
    #[arg(long)]
    pub stationary: bool,
    /// Kernel support `A`; taken from `--model` when given.
    #[arg(long)]
    pub support: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    /// Accepted for symmetry with the other subcommands; the estimator is
    /// deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Points per component on `[0, A]` for `--eval-out`.
    #[arg(long, default_value_t = 201)]
    pub eval_grid: usize,
    #[arg(long)]
    pub eval_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Points of the rescaled-time grid on `[0, 1]` (1 means `x = 0.5`).
    #[arg(long, default_value_t = 11)]
    pub grid: usize,
    #[arg(long, default_value_t = 1024)]
    pub cells: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub chi_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `outputs` in the config.
    #[arg(long)]
    pub outputs: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub h: f64,
    #[arg(long = "J", default_value_t = 8)]
    pub js: usize,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 1)]
    pub k_order: usize,
    #[arg(long, default_value_t = 1)]
    pub target: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn zero_based(target: usize, d: usize) -> Result<usize> {
    if target == 0 || target > d {
        return Err(HarnessError::Config(format!("--target must be in 1..={d}")));
    }
    Ok(target - 1)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = a.model.load()?;
    let model = ModelSpec::new(cfg)?;
    let warmup = a.warmup.unwrap_or(WARMUP_FACTOR * model.support());
    let ev = simulate(a.engine, &model, model.horizon(), warmup, RngStream::new(a.seed, a.stream))?;
    ev.save(&a.out)?;
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let events = EventStream::load(&a.events)?;
    let support = match (&a.model, a.support) {
        (Some(m), _) => ModelRef::parse(m).resolve(None)?.support,
        (None, Some(s)) => s,
        (None, None) => 1.0,
    };
    let basis = BasisParams {
        support,
        order: a.order,
        js: a.js,
        d: events.d,
    };
    let mut cfg = EstimatorConfig::new(zero_based(a.target, events.d)?, a.x0, a.h, basis);
    cfg.k_order = a.k_order;
    cfg.kernel = a.kernel;
    cfg.quad_step = a.quad_step;
    cfg.ridge = a.ridge;
    cfg.boundary = a.boundary;
    let fit = if a.stationary {
        fit_stationary(&events, &cfg)?
    } else {
        fit_local(&events, &cfg)?
    };
    std::fs::write(&a.out, fit.to_json()? + "\n")?;
    if let Some(path) = &a.eval_out {
        let mut text = String::from("u,m,mu_hat\n");
        for (u, m, v) in fit.eval_grid(a.eval_grid) {
            writeln!(text, "{u},{},{v}", m + 1).unwrap();
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_moments(a: &MomentsArgs) -> Result<()> {
    let model = ModelSpec::new(a.model.load()?)?;
    let opts = MomentOptions {
        cells_per_support: a.cells,
        ..MomentOptions::with_tol(a.tol)
    };
    let table = compute_lambda(&model, &unit_grid(a.grid), &opts)?;
    write_or_print(a.out.as_deref(), &table.lambda_csv())?;
    if let Some(p) = &a.chi_out {
        std::fs::write(p, table.chi_csv())?;
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(o) = &a.outputs {
        cfg.outputs = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    let base = a.config.parent().map(Path::to_path_buf);
    let report = run_experiment(&cfg, base.as_deref())?;
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    eprintln!(
        "{} rows ({} failed) written to {}",
        report.rows.len(),
        failed,
        report.report_path.display()
    );
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<bool> {
    let cfg = a.model.load()?;
    let opts = ValidationOptions {
        base_seed: a.seed,
        lambda_scale: a.lambda_scale,
        ..Default::default()
    };
    let report = validate_pipeline(&cfg, cfg.horizon, a.replicates, &opts)?;
    for c in &report.checks {
        eprintln!(
            "{:<22} {} max|z| = {:.3} within = {:.3}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.max_abs_z,
            c.fraction_within
        );
    }
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report.pass)
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let model = ModelSpec::new(a.model.load()?)?;
    let basis = SplineBasis::new(model.support(), a.order, a.js, model.dim())?;
    let proj = project_truth(&model, &basis, zero_based(a.target, model.dim())?, a.x0, a.h, a.k_order)?;
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&proj)? + "\n"))
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Validate(a) => cmd_validate(a).map(|pass| {
            if !pass {
                eprintln!("validation failed");
            }
        }),
        Command::Project(a) => cmd_project(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
