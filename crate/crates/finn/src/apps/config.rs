//! Run configuration: a flat key-value TOML file.
//!
//! Recognised keys (all optional — each subcommand fills in its own
//! defaults, and CLI flags override the file):
//!
//! ```toml
//! hidden = [16, 16]          # hidden layer widths
//! steps = 2000               # optimisation steps
//! batch_size = 128
//! learning_rate = 0.005
//! epsilon = 1.0              # integral constraint value / bound
//! domain_lower = [-3.0, -3.0]
//! domain_upper = [3.0, 3.0]
//! seed = 0
//! log_every = 100
//! beta = 10.0                # soft-max temperature (soft-bellman)
//! sample_count = 10000       # points to draw (sample)
//! ```

use crate::training::{OptimiserKind, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon: Option<f64>,
    pub domain_lower: Option<Vec<f64>>,
    pub domain_upper: Option<Vec<f64>>,
    pub seed: u64,
    pub log_every: usize,
    pub beta: Option<f64>,
    pub sample_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hidden: vec![16, 16],
            steps: 2000,
            batch_size: 128,
            learning_rate: 5e-3,
            epsilon: None,
            domain_lower: None,
            domain_upper: None,
            seed: 0,
            log_every: 100,
            beta: None,
            sample_count: 10_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> crate::Result<Self> {
        // defaults for anything the file leaves out
        let table: toml::Table = text
            .parse()
            .map_err(|e| crate::Error::InvalidConfig(format!("{e}")))?;
        let mut base = toml::Table::try_from(RunConfig::default())
            .map_err(|e| crate::Error::InvalidConfig(format!("{e}")))?;
        for (k, v) in table {
            base.insert(k, v);
        }
        base.try_into()
            .map_err(|e| crate::Error::InvalidConfig(format!("{e}")))
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimiser: OptimiserKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                delta: 1e-8,
            },
            seed: self.seed,
            log_every: self.log_every,
        }
    }

    /// JSON echo of the effective configuration, written next to the
    /// run outputs.
    pub fn echo_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
