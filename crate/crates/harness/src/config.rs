//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use lshawkes::estimate::{BoundaryMode, SmoothingKernel};
use lshawkes::model::presets;
use lshawkes::{Engine, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Where the model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRef {
    Preset(String),
    /// Path to a model config file, relative paths resolved against the
    /// experiment file's directory.
    Path(PathBuf),
    Inline(ModelConfig),
}

impl ModelRef {
    pub fn resolve(&self, base: Option<&Path>) -> Result<ModelConfig> {
        match self {
            ModelRef::Preset(name) => presets::by_name(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown preset `{name}`"))),
            ModelRef::Path(p) => {
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                Ok(ModelConfig::load(full)?)
            }
            ModelRef::Inline(cfg) => Ok(cfg.clone()),
        }
    }

    /// Parses `preset:NAME` or a file path.
    pub fn parse(arg: &str) -> Self {
        match arg.strip_prefix("preset:") {
            Some(name) => ModelRef::Preset(name.to_string()),
            None => ModelRef::Path(PathBuf::from(arg)),
        }
    }
}

/// `value`, or `c * T^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Fixed(f64),
    Power { c: f64, exponent: f64 },
}

impl Rule {
    pub fn at(&self, horizon: f64) -> f64 {
        match *self {
            Rule::Fixed(v) => v,
            Rule::Power { c, exponent } => c * horizon.powf(exponent),
        }
    }

    /// Rounded and at least `min`.
    pub fn count_at(&self, horizon: f64, min: usize) -> usize {
        (self.at(horizon).round().max(0.0) as usize).max(min)
    }
}

/// Which estimator each replicate runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    Local,
    /// Uniform weight over `[A, T]`; `x0` is only used to evaluate errors.
    Stationary,
}

fn default_order() -> usize {
    4
}
fn default_k_order() -> usize {
    1
}
fn default_warmup_factor() -> f64 {
    lshawkes::simulate::WARMUP_FACTOR
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    pub t_grid: Vec<f64>,
    pub h_rule: Rule,
    pub j_rule: Rule,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_k_order")]
    pub k_order: usize,
    #[serde(default)]
    pub kernel: SmoothingKernel,
    #[serde(default)]
    pub boundary: BoundaryMode,
    #[serde(default)]
    pub fit: FitMode,
    #[serde(default)]
    pub target: usize,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub quad_step: Option<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub x0_list: Vec<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_warmup_factor")]
    pub warmup_factor: f64,
    /// Replicates run concurrently per batch; 0 means the rayon default.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment config serializes")
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return fail("t_grid must be a non-empty list of positive horizons".into());
        }
        if self.x0_list.is_empty() || self.x0_list.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return fail("x0_list must be a non-empty list of points in (0, 1)".into());
        }
        if self.order == 0 || self.k_order == 0 {
            return fail("order and k_order must be at least 1".into());
        }
        if self.fit == FitMode::Local && self.boundary == BoundaryMode::Strict {
            for &t in &self.t_grid {
                let h = self.h_rule.at(t);
                for &x0 in &self.x0_list {
                    if !(x0 - h > 0.0 && x0 + h <= 1.0) {
                        return fail(format!("window x0 = {x0}, h = {h} at T = {t} leaves (0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Basis size per component at horizon `t`; never below the spline order.
    pub fn js_at(&self, horizon: f64) -> usize {
        self.j_rule.count_at(horizon, self.order)
    }
}

/// Whether the rules move in the direction the rate theory asks for as `T`
/// grows: `h` non-increasing, `J` non-decreasing and `h T` increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMonotonicity {
    pub h_nonincreasing: bool,
    pub j_nondecreasing: bool,
    pub ht_increasing: bool,
}

pub fn rule_monotonicity(cfg: &ExperimentConfig) -> RuleMonotonicity {
    let mut ts = cfg.t_grid.clone();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let hs: Vec<f64> = ts.iter().map(|&t| cfg.h_rule.at(t)).collect();
    let js: Vec<usize> = ts.iter().map(|&t| cfg.js_at(t)).collect();
    RuleMonotonicity {
        h_nonincreasing: hs.windows(2).all(|w| w[1] <= w[0]),
        j_nondecreasing: js.windows(2).all(|w| w[1] >= w[0]),
        ht_increasing: hs.iter().zip(&ts).collect::<Vec<_>>().windows(2).all(|w| w[1].0 * w[1].1 > w[0].0 * w[0].1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "model": {"preset": "poisson"},
                "t_grid": [2000, 8000],
                "h_rule": {"power": {"c": 0.5, "exponent": -0.2}},
                "j_rule": {"fixed": 4},
                "replicates": 2,
                "base_seed": 1,
                "x0_list": [0.5]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = sample();
        assert_eq!(cfg.order, 4);
        assert_eq!(cfg.engine, Engine::Cluster);
        assert_eq!(cfg.warmup_factor, 20.0);
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        cfg.check().unwrap();
        let mono = rule_monotonicity(&cfg);
        assert!(mono.h_nonincreasing && mono.j_nondecreasing && mono.ht_increasing);
    }

    #[test]
    fn infeasible_window_is_rejected() {
        let mut cfg = sample();
        cfg.x0_list = vec![0.1];
        cfg.h_rule = Rule::Fixed(0.2);
        assert!(cfg.check().is_err());
        cfg.replicates = 0;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn model_refs() {
        assert_eq!(ModelRef::parse("preset:sine"), ModelRef::Preset("sine".into()));
        assert!(ModelRef::Preset("nope".into()).resolve(None).is_err());
        assert_eq!(ModelRef::Preset("sine".into()).resolve(None).unwrap(), presets::sine());
    }
}
