//! Run configuration: TOML, or an equivalent JSON tree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in model name, or a path to a model file.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple: Option<CoupleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meanfield: Option<MeanFieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
}

fn default_model() -> String {
    "ou_benchmark".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "one")]
    pub n_paths: usize,
    /// Segment length `r`.
    #[serde(default = "unit")]
    pub delay: f64,
    pub x0: Vec<f64>,
    /// 1-based starting regime.
    #[serde(default = "one")]
    pub regime: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopChoice {
    Horizon,
    Meeting,
    #[default]
    Coupling,
    EnterDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "unit")]
    pub delay: f64,
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub k: usize,
    pub y0: Vec<f64>,
    #[serde(default = "one")]
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meet_eps: Option<f64>,
    /// Spacing of the tail-curve grid; defaults to `horizon/100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_step: Option<f64>,
    #[serde(default)]
    pub stop: StopChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub h: f64,
    pub m: f64,
    pub r: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "four")]
    pub n_moments: u32,
    /// MGF arguments as fractions of `1/R_hat`.
    #[serde(default = "default_mgf_fractions")]
    pub mgf_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaChoice {
    /// `sigma_i = 1`.
    #[default]
    Unit,
    /// `sigma_i = 1 + amplitude * sin(x_i)`.
    Sine { amplitude: f64 },
    /// `sigma_i = sqrt(1 + x_i^2)`; violates ellipticity, kept as a negative demo.
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldSection {
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub beta: Vec<f64>,
    #[serde(default = "unit")]
    pub lambda0: f64,
    /// Defaults to `lambda0/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub sigma: SigmaChoice,
    /// 1-based frozen regime for the drift check and coupling run.
    #[serde(default = "one")]
    pub regime: usize,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default = "default_rho_step")]
    pub rho_step: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Initial distances for the coupling comparison; empty skips it.
    #[serde(default)]
    pub distances: Vec<f64>,
    #[serde(default = "default_mf_paths")]
    pub n_paths: usize,
    #[serde(default = "default_mf_dt")]
    pub dt: f64,
    #[serde(default = "default_mf_horizon")]
    pub horizon: f64,
}

impl Default for MeanFieldSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    /// Injects a rate fault into the coupled jump laws.
    #[serde(default)]
    pub corrupt_rates: bool,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn four() -> u32 {
    4
}
fn unit() -> f64 {
    1.0
}
fn default_alpha() -> Vec<f64> {
    vec![1.0, 0.5]
}
fn default_mgf_fractions() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}
fn default_rho_max() -> f64 {
    10.0
}
fn default_rho_step() -> f64 {
    0.25
}
fn default_directions() -> usize {
    5
}
fn default_mf_paths() -> usize {
    1000
}
fn default_mf_dt() -> f64 {
    1e-3
}
fn default_mf_horizon() -> f64 {
    200.0
}

impl RunConfig {
    pub fn parse(text: &str, path_hint: Option<&Path>) -> Result<Self> {
        let json = path_hint.and_then(|p| p.extension()).is_some_and(|e| e == "json")
            || text.trim_start().starts_with('{');
        if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
