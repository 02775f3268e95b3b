use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ControllerModel;
use crate::autoencoder::Embedding;
use crate::error::{Error, Result};
use crate::kernel::sigmoid;
use crate::rng;
use crate::space::{discretize, OperatorKind, OriginVector, SpaceConfig};

/// Controller-only test bed: embeddings are decoded by a fixed random linear
/// map followed by a sigmoid, and the reward is 1 when layer `layer` gets the
/// `target` operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditSurrogate {
    pub space: SpaceConfig,
    pub embed_dim: usize,
    pub target: OperatorKind,
    pub layer: usize,
    map: Vec<f64>,
}

impl BanditSurrogate {
    pub fn new(space: SpaceConfig, embed_dim: usize, target: OperatorKind, layer: usize, seed: u64) -> Result<Self> {
        space.validate()?;
        if layer >= space.layer_count {
            return Err(Error::Config(format!("layer {layer} outside a {}-layer space", space.layer_count)));
        }
        if embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        let mut r = rng::seeded(seed);
        let scale = 1.0 / (embed_dim as f64).sqrt();
        let map = (0..space.origin_dim() * embed_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z * scale
            })
            .collect();
        Ok(BanditSurrogate {
            space,
            embed_dim,
            target,
            layer,
            map,
        })
    }

    pub fn decode(&self, e: &Embedding) -> Result<OriginVector> {
        if e.dim() != self.embed_dim {
            return Err(Error::Shape(format!("expected a {}-dim embedding, got {}", self.embed_dim, e.dim())));
        }
        let values = self
            .map
            .chunks(self.embed_dim)
            .map(|row| sigmoid(row.iter().zip(&e.0).map(|(w, x)| w * x).sum()))
            .collect();
        OriginVector::new(values)
    }

    pub fn reward(&self, e: &Embedding) -> Result<f64> {
        let arch = discretize(&self.decode(e)?, &self.space)?;
        Ok(if arch.layers[self.layer].op == self.target { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub steps: usize,
    pub lr: f64,
    /// Fresh samples drawn to measure the target frequency.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            steps: 2000,
            lr: 1e-2,
            eval_samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditReport {
    pub initial_frequency: f64,
    pub final_frequency: f64,
    pub mean_reward: f64,
}

fn frequency(c: &ControllerModel, s: &BanditSurrogate, input: &[f64], n: usize, seed: u64) -> Result<f64> {
    let mut hits = 0.0;
    for i in 0..n {
        hits += s.reward(&c.sample_action(input, rng::derive_seed(seed, i as u64))?.action)?;
    }
    Ok(hits / n as f64)
}

/// Runs `cfg.steps` REINFORCE updates against the surrogate with a fixed
/// controller input and measures the target frequency before and after.
pub fn run_bandit(
    controller: &mut ControllerModel,
    surrogate: &BanditSurrogate,
    input: &[f64],
    cfg: &BanditConfig,
) -> Result<BanditReport> {
    let eval_seed = rng::derive_seed(cfg.seed, u64::MAX);
    let initial_frequency = frequency(controller, surrogate, input, cfg.eval_samples, eval_seed)?;
    let mut total = 0.0;
    for step in 0..cfg.steps {
        let sample = controller.sample_action(input, rng::derive_seed(cfg.seed, step as u64))?;
        let r = surrogate.reward(&sample.action)?;
        total += r;
        controller.reinforce_update(&sample, r, cfg.lr)?;
    }
    let final_frequency = frequency(controller, surrogate, input, cfg.eval_samples, rng::derive_seed(eval_seed, 1))?;
    Ok(BanditReport {
        initial_frequency,
        final_frequency,
        mean_reward: if cfg.steps == 0 { 0.0 } else { total / cfg.steps as f64 },
    })
}
