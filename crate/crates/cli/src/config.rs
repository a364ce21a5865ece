//! Run configurations, one JSON document per invocation. Unknown keys are
//! rejected everywhere.

use serde::{Deserialize, Serialize};

use llgs_core::bvp::{BvpConfig, Formulation, Unknown};
use llgs_core::continuation::StepPolicy;
use llgs_core::freezing::FreezeConfig;
use llgs_core::{MaterialParams, Param, WaveFrame};

/// `n` equispaced points on `[min, max]`, or strictly inside it when `open`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default)]
    pub open: bool,
}

impl Range {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) || self.n == 0 {
            return Err(format!("range needs finite min < max and n >= 1, got {self:?}"));
        }
        let (a, b, n) = (self.min, self.max, self.n);
        Ok(if self.open {
            (0..n).map(|k| a + (b - a) * (k + 1) as f64 / (n + 1) as f64).collect()
        } else if n == 1 {
            vec![a]
        } else {
            (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: Range,
    pub c_cp: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub params: MaterialParams,
    /// Optional `(h, c_cp)` grid at the configured `(α, β, μ)`.
    #[serde(default)]
    pub stability_map: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityMapConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub h: Range,
    pub c_cp: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelnikovConfig {
    pub params: MaterialParams,
    /// Overrides the homogeneous speed of `params`.
    #[serde(default)]
    pub s0: Option<f64>,
    /// `(c_cp, s − s₀, Ω − Ω₀)` at which to evaluate the linear splitting.
    #[serde(default)]
    pub deviations: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: Param,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    #[serde(default)]
    pub sweeps: Vec<SweepSpec>,
    #[serde(default)]
    pub bvp: BvpConfig,
    #[serde(default)]
    pub policy: StepPolicy,
}

fn default_epsilon() -> f64 {
    llgs_core::shooting::DEFAULT_EPSILON
}

fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootConfig {
    pub params: MaterialParams,
    /// Defaults to the homogeneous `(s₀, Ω₀)` of `params`.
    #[serde(default)]
    pub wave: Option<WaveFrame>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueConfig {
    /// Required unless a seed profile is given; the analytic seed needs
    /// `c_cp = 0`.
    #[serde(default)]
    pub params: Option<MaterialParams>,
    #[serde(default)]
    pub formulation: Option<Formulation>,
    #[serde(default)]
    pub free: Option<Vec<Unknown>>,
    pub parameter: Param,
    pub target: f64,
    #[serde(default)]
    pub bvp: BvpConfig,
    #[serde(default)]
    pub policy: StepPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeCmdConfig {
    pub params: MaterialParams,
    #[serde(default)]
    pub freeze: FreezeConfig,
}
