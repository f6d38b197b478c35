use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::mi::MarginalPairing;
use crate::optim::OptimizerKind;

/// When the statistics network is re-initialised and re-trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One inner loop per epoch, cycling over that epoch's batches.
    #[default]
    Epoch,
    /// One inner loop before every outer update, on that update's batch.
    Batch,
}

/// Every knob of a training run. Unknown keys are rejected when parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the MI term.
    pub beta: f64,
    /// Inner ascent steps per inner loop.
    pub inner_steps: usize,
    /// Outer epochs.
    pub epochs: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the connectivity term; 0 disables it.
    pub con_weight: f64,
    /// Disables the MI term and the inner loop entirely.
    pub use_mi: bool,
    pub optimizer: OptimizerKind,
    /// Stale validation epochs tolerated before stopping; 0 never stops.
    pub patience: usize,
    pub granularity: Granularity,
    pub marginal: MarginalPairing,
    /// Width of every GCN layer.
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    /// Hidden width of the assignment MLP, the classifier and the statistics head.
    pub mlp_hidden: usize,
    /// Hard-selection threshold on subgraph membership probability.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.1,
            inner_steps: 20,
            epochs: 100,
            inner_lr: 1e-3,
            outer_lr: 1e-3,
            batch_size: 32,
            seed: 0,
            con_weight: 1.0,
            use_mi: true,
            optimizer: OptimizerKind::Adam,
            patience: 20,
            granularity: Granularity::Epoch,
            marginal: MarginalPairing::Shift,
            hidden_dim: 16,
            gcn_layers: 2,
            mlp_hidden: 16,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GibError::Config(m));
        if !(self.beta >= 0.0) {
            return bad(format!("beta = {} must be >= 0", self.beta));
        }
        if !(self.con_weight >= 0.0) {
            return bad(format!("con_weight = {} must be >= 0", self.con_weight));
        }
        if self.inner_steps == 0 {
            return bad("inner_steps must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.inner_lr > 0.0) || !(self.outer_lr > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        if self.batch_size == 0 || (self.use_mi && self.batch_size < 2) {
            return bad(format!("batch_size = {} too small", self.batch_size));
        }
        if self.hidden_dim == 0 || self.gcn_layers == 0 || self.mlp_hidden == 0 {
            return bad("layer widths and counts must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold = {} outside (0, 1)", self.threshold));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| GibError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Effective MI weight: zero when the MI term is disabled.
    pub fn effective_beta(&self) -> f64 {
        if self.use_mi {
            self.beta
        } else {
            0.0
        }
    }
}
