//! Reward producers. [`SyntheticOracle`] scores an architecture by weighted
//! agreement with a hidden target, which makes small spaces exactly rankable;
//! [`ChildEvaluator`] builds and trains a convolutional child network and
//! reports its best validation accuracy.

mod augment;
mod child;
mod data;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Architecture, SpaceConfig};

pub use augment::{augment_batch, cutout, flip_horizontal, pad_crop, AugmentConfig};
pub use child::{ChildCache, ChildConfig, ChildNet, LayerPlan};
pub use data::{
    load_cifar_binary, load_cifar_dir, parse_cifar, split, synthetic_blobs, ChannelStats, DatasetSplit,
    LabeledImages, PreparedData, CIFAR_CHANNELS, CIFAR_CLASSES, CIFAR_RECORD_BYTES, CIFAR_SIDE,
};
pub use train::{evaluate_accuracy, run_final, train_child, ChildEvaluator, TrainOptions};

/// Training budget of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalBudget {
    /// Epochs per candidate during search.
    pub epochs_e1: usize,
    /// Epochs for the final retraining.
    pub epochs_e2: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EvalBudget {
    fn default() -> Self {
        EvalBudget {
            epochs_e1: 70,
            epochs_e2: 630,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl EvalBudget {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_e1 == 0 || self.epochs_e2 == 0 {
            return Err(Error::Config("epoch budgets must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardMeta {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Validation accuracy per epoch.
    pub accuracy_curve: Vec<f64>,
    pub last_accuracy: Option<f64>,
    pub param_count: usize,
    pub epochs: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub value: f64,
    pub meta: RewardMeta,
}

impl Reward {
    pub fn new(value: f64, meta: RewardMeta) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::EvaluationFailed(format!("reward {value} outside [0, 1]")));
        }
        Ok(Reward { value, meta })
    }
}

/// Scores architectures; must be a pure function of `(arch, budget.seed)`.
pub trait Evaluator {
    fn evaluate(&self, arch: &Architecture, budget: &EvalBudget) -> Result<Reward>;
}

/// Weighted agreement with a target: one weight per operator decision
/// followed by one per feasible skip bit (layer-major, source ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub space: SpaceConfig,
    pub target: Architecture,
    weights: Vec<f64>,
}

impl SyntheticOracle {
    /// Nonnegative weights with a positive sum; they are rescaled to sum to one.
    pub fn new(space: SpaceConfig, target: Architecture, weights: Vec<f64>) -> Result<Self> {
        target.validate(&space)?;
        let expected = space.layer_count + space.feasible_skips();
        if weights.len() != expected {
            return Err(Error::Config(format!(
                "oracle needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("oracle weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("oracle weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(SyntheticOracle { space, target, weights })
    }

    pub fn uniform(space: SpaceConfig, target: Architecture) -> Result<Self> {
        let n = space.layer_count + space.feasible_skips();
        Self::new(space, target, vec![1.0; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn score(&self, arch: &Architecture) -> Result<f64> {
        arch.validate(&self.space)?;
        let l = self.space.layer_count;
        let mut total = 0.0;
        for (i, (a, t)) in arch.layers.iter().zip(&self.target.layers).enumerate() {
            if a.op == t.op {
                total += self.weights[i];
            }
        }
        if self.space.skips_enabled {
            let mut k = l;
            for i in 0..l {
                for s in 0..i {
                    if arch.layers[i].skips.contains(&s) == self.target.layers[i].skips.contains(&s) {
                        total += self.weights[k];
                    }
                    k += 1;
                }
            }
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

impl Evaluator for SyntheticOracle {
    fn evaluate(&self, arch: &Architecture, _budget: &EvalBudget) -> Result<Reward> {
        Reward::new(self.score(arch)?, RewardMeta::default())
    }
}
