use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

/// Optimizer, batching and early-stopping settings shared by every
/// classifier in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size_large: usize,
    pub batch_size_small: usize,
    /// Training images per class below which the small batch size is used.
    pub small_category_threshold: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size_large: 32,
            batch_size_small: 16,
            small_category_threshold: 400,
            patience: 7,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("training.{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!(
                    "training.{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if self.batch_size_large == 0 || self.batch_size_small == 0 {
            return Err(Error::Config("training batch sizes must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("training.patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("training.max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Small batches when the rarest class has fewer than
    /// `small_category_threshold` training images.
    pub fn batch_size_for(&self, class_counts: &[usize]) -> usize {
        let smallest = class_counts.iter().copied().min().unwrap_or(0);
        if smallest < self.small_category_threshold {
            self.batch_size_small
        } else {
            self.batch_size_large
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}
