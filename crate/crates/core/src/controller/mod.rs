//! The controller: a copy of the pretrained simulator that parameterizes an
//! isotropic Gaussian policy over embeddings and is fine-tuned with REINFORCE.

mod bandit;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderModel, Embedding, SequenceEncoder};
use crate::error::{Error, Result};
use crate::kernel::params::write_atomic;
use crate::kernel::{adam_step, AdamConfig, Gradients, ParamSet};
use crate::rng;

pub use bandit::{run_bandit, BanditConfig, BanditReport, BanditSurrogate};

pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_BASELINE_DECAY: f64 = 0.95;
pub const DEFAULT_CONTROLLER_LR: f64 = 1e-5;

/// One stochastic proposal: the policy mean for `input` and the sampled action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub input: Vec<f64>,
    pub mean: Embedding,
    pub action: Embedding,
    pub log_prob: f64,
    pub seed: u64,
    /// Controller update count when the sample was drawn.
    pub controller_step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub reward: f64,
    pub advantage: f64,
    /// Baseline after folding in `reward`.
    pub baseline: f64,
    pub grad_norm: f64,
}

/// `sum_i log N(action_i | mean_i, sigma^2)`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], sigma: f64) -> f64 {
    let var = sigma * sigma;
    action
        .iter()
        .zip(mean)
        .map(|(a, m)| -0.5 * (a - m).powi(2) / var - 0.5 * (2.0 * PI * var).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMeta {
    pub sigma: f64,
    pub baseline: Option<f64>,
    pub decay: f64,
    pub updates: u64,
    pub layer_count: usize,
    pub token_width: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerModel {
    pub params: ParamSet,
    encoder: SequenceEncoder,
    sigma: f64,
    baseline: Option<f64>,
    baseline_decay: f64,
    updates: u64,
}

impl ControllerModel {
    /// Deep-copies the pretrained simulator weights.
    pub fn init_from_simulator(ae: &AutoencoderModel, sigma: f64, baseline_decay: f64) -> Result<Self> {
        if !ae.is_pretrained() {
            return Err(Error::NotPretrained);
        }
        Self::from_encoder(ae.config.encoder(), ae.encoder_params.clone(), sigma, baseline_decay)
    }

    /// Controller over an arbitrary encoder; used for surrogates and tests.
    pub fn from_encoder(encoder: SequenceEncoder, params: ParamSet, sigma: f64, baseline_decay: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        if !(baseline_decay > 0.0 && baseline_decay < 1.0) {
            return Err(Error::Config(format!(
                "baseline decay must lie in (0, 1), got {baseline_decay}"
            )));
        }
        // fresh optimizer state: fine-tuning starts its own Adam moments
        let mut fresh = ParamSet::new();
        for (name, t) in params.iter() {
            fresh.insert(name, t.clone());
        }
        Ok(ControllerModel {
            params: fresh,
            encoder,
            sigma,
            baseline: None,
            baseline_decay,
            updates: 0,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    pub fn baseline_decay(&self) -> f64 {
        self.baseline_decay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.steps * self.encoder.width()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "controller expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Deterministic encoder forward on an origin vector.
    pub fn policy_mean(&self, input: &[f64]) -> Result<Embedding> {
        self.check_input(input)?;
        let (emb, _) = self.encoder.forward(&self.params, input, 1)?;
        Ok(Embedding(emb))
    }

    /// Draws `action ~ N(mean, sigma^2 I)` from a stream seeded by `seed`.
    pub fn sample_action(&self, input: &[f64], seed: u64) -> Result<PolicySample> {
        let mean = self.policy_mean(input)?;
        let mut r = rng::seeded(seed);
        let action: Vec<f64> = mean
            .0
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut r);
                m + self.sigma * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&action, &mean.0, self.sigma);
        Ok(PolicySample {
            input: input.to_vec(),
            mean,
            action: Embedding(action),
            log_prob,
            seed,
            controller_step: self.updates,
        })
    }

    /// `log pi(action | input)` under the current parameters.
    pub fn log_prob(&self, input: &[f64], action: &Embedding) -> Result<f64> {
        let mean = self.policy_mean(input)?;
        Ok(gaussian_log_prob(&action.0, &mean.0, self.sigma))
    }

    /// `d log pi(action | input) / d params`.
    pub fn log_prob_grad(&self, input: &[f64], action: &Embedding) -> Result<Gradients> {
        self.check_input(input)?;
        let (mean, trace) = self.encoder.forward(&self.params, input, 1)?;
        let var = self.sigma * self.sigma;
        let d_mean: Vec<f64> = action.0.iter().zip(&mean).map(|(a, m)| (a - m) / var).collect();
        let mut grads = Gradients::zeros_like(&self.params);
        self.encoder.backward(&self.params, &trace, &d_mean, &mut grads)?;
        Ok(grads)
    }

    /// Folds a reward into the moving-average baseline; the first reward
    /// initializes it.
    pub fn update_baseline(&mut self, reward: f64) -> f64 {
        let b = match self.baseline {
            None => reward,
            Some(b) => self.baseline_decay * b + (1.0 - self.baseline_decay) * reward,
        };
        self.baseline = Some(b);
        b
    }

    /// One REINFORCE ascent step on `(reward - baseline) * log pi(action | input)`
    /// with Adam at `lr`, followed by the baseline update.
    pub fn reinforce_update(&mut self, sample: &PolicySample, reward: f64, lr: f64) -> Result<UpdateReport> {
        if !reward.is_finite() {
            return Err(Error::Numeric(format!("reward {reward}")));
        }
        if sample.controller_step > self.updates || self.updates - sample.controller_step > 1 {
            return Err(Error::StaleSample {
                sample: sample.controller_step,
                current: self.updates,
            });
        }
        let baseline = self.baseline.unwrap_or(reward);
        let advantage = reward - baseline;
        let mut grad_norm = 0.0;
        if advantage != 0.0 {
            let mut grads = self.log_prob_grad(&sample.input, &sample.action)?;
            grads.scale(-advantage);
            if !grads.is_finite() {
                return Err(Error::Numeric("policy gradient is not finite".into()));
            }
            grad_norm = grads.norm();
            adam_step(&mut self.params, &grads, &AdamConfig::with_lr(lr))?;
        }
        self.updates += 1;
        let baseline = self.update_baseline(reward);
        Ok(UpdateReport {
            reward,
            advantage,
            baseline,
            grad_norm,
        })
    }

    pub fn meta(&self) -> ControllerMeta {
        ControllerMeta {
            sigma: self.sigma,
            baseline: self.baseline,
            decay: self.baseline_decay,
            updates: self.updates,
            layer_count: self.encoder.steps,
            token_width: self.encoder.width(),
            hidden_dim: self.encoder.lstm.hidden,
            embed_dim: self.encoder.embed_dim(),
        }
    }

    /// Writes `controller.bin`, `controller_optim.bin` and `controller.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.params.save(&dir.join("controller.bin"))?;
        write_atomic(&dir.join("controller_optim.bin"), &self.params.optimizer_state_bytes())?;
        write_atomic(&dir.join("controller.json"), &serde_json::to_vec_pretty(&self.meta())?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ControllerMeta = serde_json::from_slice(&fs::read(dir.join("controller.json"))?)?;
        let encoder = SequenceEncoder::new(meta.layer_count, meta.token_width, meta.hidden_dim, meta.embed_dim);
        let mut params = ParamSet::load(&dir.join("controller.bin"))?;
        params.restore_optimizer_state(&fs::read(dir.join("controller_optim.bin"))?)?;
        let mut reference = ParamSet::new();
        encoder.init(&mut reference, &mut rng::seeded(0))?;
        if !params.same_layout(&reference) {
            return Err(Error::Checkpoint("controller parameters do not match the sidecar".into()));
        }
        let mut c = ControllerModel::from_encoder(encoder, ParamSet::new(), meta.sigma, meta.decay)?;
        c.params = params;
        c.baseline = meta.baseline;
        c.updates = meta.updates;
        Ok(c)
    }
}
