//! Declarative run configuration (TOML, key/value with sections).

use freqmor::error::{Error, Result};
use freqmor::fom::{model_by_name, ParametricLti};
use freqmor::param::{linspace, log_frequency_partition, logspace, tensor_grid, ParameterGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
}

fn default_grid_n() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxisSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: String,
}

fn default_spacing() -> String {
    "linear".into()
}

impl AxisSection {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Invalid("axis count must be positive".into()));
        }
        if self.count > 1 && !(self.min < self.max) {
            return Err(Error::Invalid(format!(
                "axis needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        match self.spacing.as_str() {
            "linear" => Ok(linspace(self.min, self.max, self.count)),
            "log" => {
                if self.min <= 0.0 {
                    return Err(Error::Invalid("log axis needs positive min".into()));
                }
                Ok(logspace(self.min, self.max, self.count))
            }
            other => Err(Error::Invalid(format!("unknown spacing '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgesSection {
    /// "log" builds `{0, min, ..., max}` with `count` subdomains from the
    /// frequency axis; "explicit" takes `values` verbatim.
    pub mode: String,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScmSection {
    pub method: String, // "scm" | "nnscm"
    pub epsilon: f64,
    #[serde(default = "default_eps_beta")]
    pub epsilon_beta: f64,
    #[serde(default = "default_m_alpha")]
    pub m_alpha: usize,
    #[serde(default = "default_inside")]
    pub inside: bool,
    #[serde(default)]
    pub phi: f64,
    /// Uniform frequency samples per subdomain for NNSCM training.
    #[serde(default = "default_freq_samples")]
    pub freq_samples: usize,
}

fn default_eps_beta() -> f64 {
    0.99
}
fn default_m_alpha() -> usize {
    20
}
fn default_inside() -> bool {
    true
}
fn default_freq_samples() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GreedySection {
    pub max_basis: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// 0 disables truth tracking; otherwise the subsample size.
    #[serde(default)]
    pub track_truth: usize,
}

fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RealifySection {
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1e-2
}

impl Default for RealifySection {
    fn default() -> Self {
        Self { tau: default_tau() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    7
}

/// Full declarative pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub frequency: AxisSection,
    #[serde(default, rename = "parameter")]
    pub parameters: Vec<AxisSection>,
    pub edges: Option<EdgesSection>,
    pub scm: ScmSection,
    pub greedy: GreedySection,
    #[serde(default)]
    pub realify: RealifySection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Invalid(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scm.method != "scm" && self.scm.method != "nnscm" {
            return Err(Error::Invalid(format!(
                "scm.method must be 'scm' or 'nnscm', got '{}'",
                self.scm.method
            )));
        }
        if self.scm.method == "nnscm" && self.edges.is_none() {
            return Err(Error::Invalid(
                "nnscm needs an [edges] section for the frequency partition".into(),
            ));
        }
        let model = self.build_model()?;
        if self.parameters.len() != model.parameter_dim() {
            return Err(Error::Invalid(format!(
                "model '{}' has {} parameters but the config declares {}",
                model.name,
                model.parameter_dim(),
                self.parameters.len()
            )));
        }
        for (axis, [lo, hi]) in self.parameters.iter().zip(&model.param_box) {
            if axis.min < *lo || axis.max > *hi {
                return Err(Error::Invalid(format!(
                    "parameter axis [{}, {}] outside model box [{lo}, {hi}]",
                    axis.min, axis.max
                )));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ParametricLti> {
        model_by_name(&self.model.name, self.model.grid_n)
    }

    pub fn parameter_axes(&self) -> Result<Vec<Vec<f64>>> {
        self.parameters.iter().map(|a| a.values()).collect()
    }

    pub fn frequency_values(&self) -> Result<Vec<f64>> {
        self.frequency.values()
    }

    /// Frequency partition edges, when configured.
    pub fn edge_values(&self) -> Result<Option<Vec<f64>>> {
        match &self.edges {
            None => Ok(None),
            Some(e) => match e.mode.as_str() {
                "log" => {
                    if e.count < 2 {
                        return Err(Error::Invalid("edges.count must be >= 2 for log mode".into()));
                    }
                    Ok(Some(log_frequency_partition(
                        self.frequency.min,
                        self.frequency.max,
                        e.count,
                    )?))
                }
                "explicit" => {
                    if e.values.len() < 2 {
                        return Err(Error::Invalid("edges.values needs >= 2 entries".into()));
                    }
                    Ok(Some(e.values.clone()))
                }
                other => Err(Error::Invalid(format!("unknown edges.mode '{other}'"))),
            },
        }
    }

    /// Grid used for greedy basis construction (and Bode evaluation).
    pub fn greedy_grid(&self) -> Result<ParameterGrid> {
        tensor_grid(&self.frequency_values()?, &self.parameter_axes()?)
    }

    /// Grid used for stability training: the greedy grid for standard SCM,
    /// per-subdomain uniformly sampled frequencies for NNSCM.
    pub fn stability_grid(&self) -> Result<ParameterGrid> {
        match self.scm.method.as_str() {
            "scm" => self.greedy_grid(),
            _ => {
                let edges = self
                    .edge_values()?
                    .ok_or_else(|| Error::Invalid("nnscm needs edges".into()))?;
                let mut freqs = Vec::new();
                for w in edges.windows(2) {
                    freqs.extend(linspace(w[0], w[1], self.scm.freq_samples));
                }
                tensor_grid(&freqs, &self.parameter_axes()?)?.with_frequency_edges(edges)
            }
        }
    }
}
