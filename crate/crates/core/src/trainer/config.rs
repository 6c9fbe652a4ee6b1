use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::{ModelConfig, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub total_iters: u64,
    /// Iteration after which lr and weight decay drop; half of `total_iters` when unset.
    pub decay_at: Option<u64>,
    pub decay_factor: f64,
    pub batch: usize,
    /// Side of the square MS training crops.
    pub crop: usize,
    pub seed: u64,
    /// The loss log is flushed every this many iterations.
    pub log_flush_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            lr: 1e-4,
            weight_decay: 1e-7,
            total_iters: 5000,
            decay_at: None,
            decay_factor: 10.0,
            batch: 2,
            crop: 64,
            seed: 0,
            log_flush_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn variant(&self) -> Variant {
        self.model.variant
    }

    pub fn decay_iteration(&self) -> u64 {
        self.decay_at.unwrap_or(self.total_iters / 2)
    }

    /// Learning rate and weight decay for the step that completes iteration `iter + 1`.
    pub fn schedule(&self, iter: u64) -> (f64, f64) {
        if iter >= self.decay_iteration() {
            (self.lr / self.decay_factor, self.weight_decay / self.decay_factor)
        } else {
            (self.lr, self.weight_decay)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch == 0 {
            return fail("batch must be at least 1");
        }
        if self.crop < 4 {
            return fail("crop must be at least 4 MS pixels");
        }
        if self.total_iters == 0 {
            return fail("total_iters must be positive");
        }
        if self.decay_iteration() >= self.total_iters && self.total_iters > 1 {
            return fail("decay_at must precede total_iters");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail("weight_decay must be non-negative");
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return fail("decay_factor must be positive");
        }
        if !self.loss.alpha.is_finite() {
            return fail("alpha must be finite");
        }
        if self.log_flush_every == 0 {
            return fail("log_flush_every must be positive");
        }
        Ok(())
    }
}
