//! Experiment grid configuration.
//!
//! A grid is a single JSON document:
//!
//! ```json
//! {
//!   "sweep": { "vary": "n", "values": [75, 100, 150], "fixed": [50, 150] },
//!   "model": { "n": 0, "layers": 0, "k": [3, 3, 3], "pi": [],
//!              "latent": { "kind": "truncated_normal", "sigma": 1.0 },
//!              "b_range": [-0.02, 0.02], "seed": 0 },
//!   "algorithms": ["tensor", "baseline"],
//!   "replications": 20,
//!   "base_seed": 1,
//!   "output_dir": "out"
//! }
//! ```
//!
//! `n` and `layers` in the model template are overwritten per cell.

use std::fmt;
use std::path::PathBuf;

use dimple_core::{ModelConfig, ThresholdMode};
use serde::{Deserialize, Serialize};

pub const DEFAULT_REPLICATIONS: usize = 20;
pub const PAPER_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tensor,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tensor => "tensor",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "L")]
    L,
}

/// Swept variable and the values of the other one, one curve each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub vary: Axis,
    pub values: Vec<usize>,
    pub fixed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub sweep: Sweep,
    pub model: ModelConfig,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Reduce each K_m by one for latent rows on the simplex.
    #[serde(default)]
    pub sbm: bool,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Invalid configuration; the CLI maps it to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentGrid {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let grid: Self = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid grid: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sweep.values.is_empty() || self.sweep.fixed.is_empty() {
            return Err(ConfigError("sweep needs at least one value and one fixed value".into()));
        }
        if self.replications == 0 {
            return Err(ConfigError("replications must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(ConfigError("no algorithms selected".into()));
        }
        for (n, layers) in self.cells() {
            self.cell_model(n, layers, 0)
                .validate()
                .map_err(|e| ConfigError(format!("cell n = {n}, L = {layers}: {e}")))?;
        }
        Ok(())
    }

    /// `(n, L)` of every cell: curves in the order of `fixed`, points in the
    /// order of `values`.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &f in &self.sweep.fixed {
            for &v in &self.sweep.values {
                let cell = match self.sweep.vary {
                    Axis::N => (v, f),
                    Axis::L => (f, v),
                };
                if !out.contains(&cell) {
                    out.push(cell);
                }
            }
        }
        out
    }

    pub fn cell_model(&self, n: usize, layers: usize, seed: u64) -> ModelConfig {
        ModelConfig { n, layers, seed, ..self.model.clone() }
    }
}
