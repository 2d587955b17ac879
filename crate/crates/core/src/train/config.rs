use crate::data::{Augmentation, ChannelStats};
use crate::error::Result;
use crate::invalid;

/// Input normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Normalization {
    /// Fixed ImageNet constants regardless of the data.
    #[default]
    Default,
    /// Channel statistics of the training set.
    Exact,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Default => "default",
            Normalization::Exact => "exact",
        }
    }

    pub fn fixed_stats(self) -> Option<ChannelStats> {
        match self {
            Normalization::Default => Some(ChannelStats::imagenet_default()),
            Normalization::Exact => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    /// Applied to convolution and classifier weights only.
    pub weight_decay: f64,
    pub augmentation: Augmentation,
    pub normalization: Normalization,
    pub bn_eval_update: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            base_lr: 0.1,
            warmup_epochs: 3,
            momentum: 0.9,
            weight_decay: 1e-4,
            augmentation: Augmentation::None,
            normalization: Normalization::Default,
            bn_eval_update: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 && self.warmup_epochs != 0 {
            return invalid!("warmup_epochs must be 0 when epochs is 0");
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return invalid!("warmup_epochs ({}) must be < epochs ({})", self.warmup_epochs, self.epochs);
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return invalid!("base_lr must be positive, got {}", self.base_lr);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid!("momentum must lie in [0, 1), got {}", self.momentum);
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return invalid!("weight_decay must be >= 0, got {}", self.weight_decay);
        }
        if self.batch_size == 0 {
            return invalid!("batch_size must be >= 1");
        }
        Ok(())
    }
}
