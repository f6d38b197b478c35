//! Run configuration file: one TOML table per module, every key optional.

use std::path::Path;

use anyhow::{Context, Result};
use gib_core::case_study::CaseStudyConfig;
use gib_core::graph_io::{MotifConfig, Split};
use gib_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

/// Train/validation fractions; the test split takes the remainder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train: 0.8, val: 0.1 }
    }
}

impl SplitConfig {
    pub fn split(&self, n: usize, seed: u64) -> Result<Split> {
        Ok(Split::by_ratio(n, self.train, self.val, seed)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub motif: MotifConfig,
    pub case_study: CaseStudyConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.train.validate()?;
        cfg.case_study.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Applies a root seed to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.motif.seed = seed;
        self.case_study.seed = seed;
        self
    }
}
