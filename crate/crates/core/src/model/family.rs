//! Serializable parameter families.
//!
//! A model file is a JSON object `{d, A, T, family, params}`; `params` is the
//! family-specific object below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FAMILY_NAMES: [&str; 5] = [
    "constant",
    "linear_baseline",
    "sine_baseline",
    "exp_kernel_tv_amplitude",
    "piecewise_const_kernel",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// `nu(x) = nu`, box kernel `mu(s, x) = height` on `[0, A)`.
    Constant {
        nu: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel_height: Option<Vec<Vec<f64>>>,
    },
    /// `nu(x) = a + b x`, optional box kernel.
    LinearBaseline {
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel_height: Option<Vec<Vec<f64>>>,
    },
    /// `nu(x) = a + b sin(2 pi cycles x)`, optional box kernel.
    SineBaseline {
        a: Vec<f64>,
        b: Vec<f64>,
        cycles: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel_height: Option<Vec<Vec<f64>>>,
    },
    /// `nu(x) = nu + nu_slope x`,
    /// `mu(s, x) = (alpha0 + alpha1 x) beta exp(-beta s)` on `[0, A)`.
    ExpKernelTvAmplitude {
        nu: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu_slope: Option<Vec<f64>>,
        alpha0: Vec<Vec<f64>>,
        alpha1: Vec<Vec<f64>>,
        beta: f64,
    },
    /// Constant baseline, kernel constant in `x` and piecewise constant in
    /// `s` on equal-width pieces: `heights[p]` is the `d x d` matrix on the
    /// `p`-th piece of `[0, A)`.
    PiecewiseConstKernel {
        nu: Vec<f64>,
        heights: Vec<Vec<Vec<f64>>>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::LinearBaseline { .. } => "linear_baseline",
            Family::SineBaseline { .. } => "sine_baseline",
            Family::ExpKernelTvAmplitude { .. } => "exp_kernel_tv_amplitude",
            Family::PiecewiseConstKernel { .. } => "piecewise_const_kernel",
        }
    }

    /// Builds a family from its tag and parameter object.
    pub fn from_name(name: &str, params: &serde_json::Value) -> Result<Self> {
        if !FAMILY_NAMES.contains(&name) {
            return Err(Error::UnknownFamily(name.to_string()));
        }
        let tagged = serde_json::json!({ "family": name, "params": params });
        serde_json::from_value(tagged).map_err(|e| Error::InvalidParams {
            family: name.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Model configuration as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    #[serde(rename = "A")]
    pub support: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(flatten)]
    pub family: Family,
}

impl ModelConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(name) = value.get("family").and_then(|v| v.as_str()) {
            if !FAMILY_NAMES.contains(&name) {
                return Err(Error::UnknownFamily(name.to_string()));
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }
}
