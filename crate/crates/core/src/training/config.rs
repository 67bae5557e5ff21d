use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::models::ModelConfig;

/// How the adversarial terms of the encoder objective are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Hypervolume,
}

/// Optimization hyperparameters shared by the G2DM and ERM trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Encoder and classifier learning rate.
    pub lr_task: f64,
    /// Discriminator learning rate.
    pub lr_disc: f64,
    /// Weight of the task loss in the encoder objective.
    pub alpha: f64,
    /// Examples drawn from each source per iteration.
    pub batch_per_domain: usize,
    pub epochs: usize,
    /// Warm-up length in iterations.
    pub warmup_iters: u64,
    /// Warm-up starts at `warmup_threshold · lr_task`.
    pub warmup_threshold: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub aggregation: Aggregation,
    pub nadir_slack: f64,
    pub patience: u32,
    pub decay_factor: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_task: 0.02,
            lr_disc: 0.05,
            alpha: 0.8,
            batch_per_domain: 32,
            epochs: 100,
            warmup_iters: 100,
            warmup_threshold: 1e-4,
            momentum: 0.9,
            weight_decay: 5e-4,
            label_smoothing: 0.0,
            aggregation: Aggregation::Sum,
            nadir_slack: 2.5,
            patience: 20,
            decay_factor: 0.5,
            seed: 1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(argument(format!("{name} = {v} must be finite and non-negative")))
            }
        };
        nonneg("lr_task", self.lr_task)?;
        nonneg("lr_disc", self.lr_disc)?;
        nonneg("weight_decay", self.weight_decay)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(argument(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.batch_per_domain == 0 || self.epochs == 0 || self.warmup_iters == 0 || self.patience == 0 {
            return Err(argument("batch_per_domain, epochs, warmup_iters and patience must be positive"));
        }
        if !(self.warmup_threshold > 0.0 && self.warmup_threshold <= 1.0) {
            return Err(argument(format!("warmup_threshold = {} outside (0, 1]", self.warmup_threshold)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(argument(format!("momentum = {} outside [0, 1)", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(argument(format!("label_smoothing = {} outside [0, 1)", self.label_smoothing)));
        }
        if !(self.nadir_slack > 1.0) {
            return Err(argument(format!("nadir_slack = {} must exceed 1", self.nadir_slack)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(argument(format!("decay_factor = {} outside (0, 1)", self.decay_factor)));
        }
        if self.model.encoder_widths.iter().chain(&self.model.discriminator_hidden).chain(&self.model.classifier_hidden).any(|w| *w == 0) {
            return Err(argument("layer widths must be positive"));
        }
        Ok(())
    }
}
