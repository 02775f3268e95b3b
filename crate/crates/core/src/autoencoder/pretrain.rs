use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::AutoencoderModel;
use crate::error::{Error, Result};
use crate::kernel::activation::mse_slices;
use crate::kernel::{adam_step, AdamConfig, Gradients, TensorBuf};
use crate::rng;
use crate::space::{encode_origin, random_architecture, SpaceConfig};

const HOLDOUT_STREAM: u64 = u64::MAX;
const EVAL_CHUNK: usize = 256;

/// What the autoencoder is pretrained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainSampling {
    /// Every origin coordinate i.i.d. `Uniform[0, 1]`.
    #[default]
    Uniform,
    /// Encodings of uniformly random valid architectures.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub holdout_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub sampling: PretrainSampling,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 50,
            batches_per_epoch: 256,
            batch_size: 64,
            holdout_size: 4096,
            lr: 1e-5,
            seed: 0,
            sampling: PretrainSampling::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean of the per-batch losses seen during the epoch (before each update).
    pub train_mse: f64,
    pub holdout_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: usize,
    /// Untrained model on the first training batch.
    pub initial_train_mse: f64,
    /// Untrained model on the holdout sample.
    pub initial_holdout_mse: f64,
    pub final_train_mse: f64,
    pub final_holdout_mse: f64,
    pub loss_curve: Vec<EpochLoss>,
    /// Final holdout MSE strictly below the initial one.
    pub improved: bool,
}

impl PretrainReport {
    pub fn holdout_reduction(&self) -> f64 {
        1.0 - self.final_holdout_mse / self.initial_holdout_mse
    }
}

/// `batch` origin-shaped samples with every coordinate drawn from `Uniform[0, 1]`,
/// as a `batch x L x width` tensor.
pub fn sample_pretrain_batch(batch: usize, cfg: &SpaceConfig, seed: u64) -> Result<TensorBuf> {
    sample_batch(batch, cfg, seed, PretrainSampling::Uniform)
}

pub(crate) fn sample_batch(
    batch: usize,
    cfg: &SpaceConfig,
    seed: u64,
    sampling: PretrainSampling,
) -> Result<TensorBuf> {
    if batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let m = cfg.origin_dim();
    let mut r = rng::seeded(seed);
    let data = match sampling {
        PretrainSampling::Uniform => (0..batch * m).map(|_| r.gen::<f64>()).collect(),
        PretrainSampling::OneHot => {
            let mut out = Vec::with_capacity(batch * m);
            for _ in 0..batch {
                let arch = random_architecture(cfg, r.gen());
                out.extend_from_slice(encode_origin(&arch, cfg)?.values());
            }
            out
        }
    };
    TensorBuf::new(vec![batch, cfg.layer_count, cfg.token_width()], data)
}

fn evaluate(model: &AutoencoderModel, data: &[f64]) -> Result<f64> {
    let m = model.origin_dim();
    let mut total = 0.0;
    for chunk in data.chunks(EVAL_CHUNK * m) {
        let (_, recon) = model.forward_batch(chunk)?;
        total += mse_slices(&recon, chunk).0 * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains encoder and decoder jointly with Adam on reconstruction MSE. On a
/// non-finite loss the model is rolled back to the end of the last completed
/// epoch and a numeric error is returned.
pub fn pretrain(model: &mut AutoencoderModel, cfg: &PretrainConfig) -> Result<PretrainReport> {
    if cfg.epochs == 0 {
        return Err(Error::Config("pretraining needs at least one epoch".into()));
    }
    if cfg.batches_per_epoch == 0 || cfg.batch_size == 0 || cfg.holdout_size == 0 {
        return Err(Error::Config("batches, batch size and holdout size must be positive".into()));
    }
    let space = model.config.space;
    let enc = model.config.encoder();
    let dec = model.config.decoder();
    let adam = AdamConfig::with_lr(cfg.lr);
    let holdout = sample_batch(cfg.holdout_size, &space, rng::derive_seed(cfg.seed, HOLDOUT_STREAM), cfg.sampling)?;
    let batch_seed = |epoch: usize, b: usize| rng::derive_seed(cfg.seed, 1 + (epoch * cfg.batches_per_epoch + b) as u64);

    let initial_holdout_mse = evaluate(model, holdout.data())?;
    let first = sample_batch(cfg.batch_size, &space, batch_seed(0, 0), cfg.sampling)?;
    let initial_train_mse = evaluate(model, first.data())?;

    let mut last_good = (model.encoder_params.clone(), model.decoder_params.clone());
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let x = sample_batch(cfg.batch_size, &space, batch_seed(epoch, b), cfg.sampling)?;
            let x = x.data();
            let (emb, etrace) = enc.forward(&model.encoder_params, x, cfg.batch_size)?;
            let (recon, dtrace) = dec.forward(&model.decoder_params, &emb, cfg.batch_size)?;
            let (loss, d_recon) = mse_slices(&recon, x);
            if !loss.is_finite() {
                model.encoder_params = last_good.0;
                model.decoder_params = last_good.1;
                return Err(Error::Numeric(format!(
                    "pretraining loss became {loss} at epoch {} batch {b}",
                    epoch + 1
                )));
            }
            epoch_loss += loss;
            let mut dgrads = Gradients::zeros_like(&model.decoder_params);
            let d_emb = dec.backward(&model.decoder_params, &dtrace, &d_recon, &mut dgrads)?;
            let mut egrads = Gradients::zeros_like(&model.encoder_params);
            enc.backward(&model.encoder_params, &etrace, &d_emb, &mut egrads)?;
            adam_step(&mut model.decoder_params, &dgrads, &adam)?;
            adam_step(&mut model.encoder_params, &egrads, &adam)?;
        }
        let holdout_mse = evaluate(model, holdout.data())?;
        loss_curve.push(EpochLoss {
            epoch: epoch + 1,
            train_mse: epoch_loss / cfg.batches_per_epoch as f64,
            holdout_mse,
        });
        model.epochs += 1;
        last_good = (model.encoder_params.clone(), model.decoder_params.clone());
    }
    let last = loss_curve.last().expect("at least one epoch");
    Ok(PretrainReport {
        epochs: cfg.epochs,
        initial_train_mse,
        initial_holdout_mse,
        final_train_mse: last.train_mse,
        final_holdout_mse: last.holdout_mse,
        improved: last.holdout_mse < initial_holdout_mse,
        loss_curve,
    })
}
