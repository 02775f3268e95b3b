//! The architecture autoencoder: an LSTM encoder (the architecture simulator)
//! and a mirrored LSTM decoder, trained jointly to reconstruct samples from
//! the origin space.

mod pretrain;
mod seq;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::params::write_atomic;
use crate::kernel::{ParamSet, TensorBuf};
use crate::rng;
use crate::space::{OriginVector, SpaceConfig};

pub use pretrain::{
    pretrain, sample_pretrain_batch, EpochLoss, PretrainConfig, PretrainReport, PretrainSampling,
};
pub use seq::{DecoderTrace, EncoderTrace, SequenceDecoder, SequenceEncoder};

/// A point in the embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub space: SpaceConfig,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            space: SpaceConfig::default(),
            embed_dim: 32,
            hidden_dim: 64,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("embed_dim and hidden_dim must be positive".into()));
        }
        if self.embed_dim >= self.space.origin_dim() {
            return Err(Error::Config(format!(
                "embed_dim {} must be below the origin dimension {}",
                self.embed_dim,
                self.space.origin_dim()
            )));
        }
        Ok(())
    }

    pub fn encoder(&self) -> SequenceEncoder {
        SequenceEncoder::new(
            self.space.layer_count,
            self.space.token_width(),
            self.hidden_dim,
            self.embed_dim,
        )
    }

    pub fn decoder(&self) -> SequenceDecoder {
        SequenceDecoder::new(
            self.space.layer_count,
            self.space.token_width(),
            self.hidden_dim,
            self.embed_dim,
        )
    }
}

/// JSON sidecar written next to the autoencoder parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderMeta {
    pub embed_dim: usize,
    pub origin_dim: usize,
    pub layer_count: usize,
    pub seed: u64,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub skips_enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub config: AutoencoderConfig,
    /// Simulator / encoder parameters.
    pub encoder_params: ParamSet,
    /// Decoder parameters.
    pub decoder_params: ParamSet,
    pub seed: u64,
    /// Pretraining epochs completed; zero means untrained.
    pub epochs: usize,
}

impl AutoencoderModel {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(seed);
        let mut encoder_params = ParamSet::new();
        config.encoder().init(&mut encoder_params, &mut r)?;
        let mut decoder_params = ParamSet::new();
        config.decoder().init(&mut decoder_params, &mut r)?;
        Ok(AutoencoderModel {
            config,
            encoder_params,
            decoder_params,
            seed,
            epochs: 0,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn origin_dim(&self) -> usize {
        self.config.space.origin_dim()
    }

    pub fn layer_count(&self) -> usize {
        self.config.space.layer_count
    }

    pub fn token_width(&self) -> usize {
        self.config.space.token_width()
    }

    pub fn is_pretrained(&self) -> bool {
        self.epochs > 0
    }

    fn check_batch(&self, x: &[f64]) -> Result<usize> {
        let m = self.origin_dim();
        if x.is_empty() || !x.len().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "expected a multiple of {m} values, got {}",
                x.len()
            )));
        }
        Ok(x.len() / m)
    }

    /// Batched forward: `x` holds whole origin-shaped samples back to back.
    /// Returns `(embeddings, reconstructions)`.
    pub fn forward_batch(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = self.check_batch(x)?;
        let (emb, _) = self.config.encoder().forward(&self.encoder_params, x, batch)?;
        let (recon, _) = self.config.decoder().forward(&self.decoder_params, &emb, batch)?;
        Ok((emb, recon))
    }

    /// Embedding and reconstruction of one origin-shaped sequence.
    pub fn ae_forward(&self, x: &[f64]) -> Result<(Embedding, Vec<f64>)> {
        if x.len() != self.origin_dim() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.origin_dim(),
                x.len()
            )));
        }
        let (emb, recon) = self.forward_batch(x)?;
        Ok((Embedding(emb), recon))
    }

    /// Encoder half only.
    pub fn encode(&self, x: &[f64]) -> Result<Embedding> {
        if x.len() != self.origin_dim() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.origin_dim(),
                x.len()
            )));
        }
        let (emb, _) = self.config.encoder().forward(&self.encoder_params, x, 1)?;
        Ok(Embedding(emb))
    }

    /// The architecture simulator: the encoder applied to uniform noise.
    pub fn simulate(&self, noise: &[f64]) -> Result<Embedding> {
        self.encode(noise)
    }

    /// Decoder half; every coordinate lies in the unit interval.
    pub fn decode(&self, e: &Embedding) -> Result<OriginVector> {
        if e.dim() != self.embed_dim() {
            return Err(Error::Shape(format!(
                "expected embedding of dimension {}, got {}",
                self.embed_dim(),
                e.dim()
            )));
        }
        let (recon, _) = self.config.decoder().forward(&self.decoder_params, e.as_slice(), 1)?;
        OriginVector::new(recon)
    }

    pub fn meta(&self) -> AutoencoderMeta {
        AutoencoderMeta {
            embed_dim: self.embed_dim(),
            origin_dim: self.origin_dim(),
            layer_count: self.layer_count(),
            seed: self.seed,
            epochs: self.epochs,
            hidden_dim: self.config.hidden_dim,
            skips_enabled: self.config.space.skips_enabled,
        }
    }

    /// Writes `encoder.bin`, `decoder.bin` and `autoencoder.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.encoder_params.save(&dir.join("encoder.bin"))?;
        self.decoder_params.save(&dir.join("decoder.bin"))?;
        let meta = serde_json::to_vec_pretty(&self.meta())?;
        write_atomic(&dir.join("autoencoder.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("autoencoder.json");
        if !meta_path.exists() {
            return Err(Error::NotPretrained);
        }
        let meta: AutoencoderMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
        let config = AutoencoderConfig {
            space: SpaceConfig::new(meta.layer_count, meta.skips_enabled)?,
            embed_dim: meta.embed_dim,
            hidden_dim: meta.hidden_dim,
        };
        config.validate()?;
        if config.space.origin_dim() != meta.origin_dim {
            return Err(Error::Checkpoint("origin_dim disagrees with layer_count".into()));
        }
        let encoder_params = ParamSet::load(&dir.join("encoder.bin"))?;
        let decoder_params = ParamSet::load(&dir.join("decoder.bin"))?;
        let reference = AutoencoderModel::new(config, meta.seed)?;
        if !encoder_params.same_layout(&reference.encoder_params)
            || !decoder_params.same_layout(&reference.decoder_params)
        {
            return Err(Error::Checkpoint("parameter layout does not match the sidecar".into()));
        }
        Ok(AutoencoderModel {
            config,
            encoder_params,
            decoder_params,
            seed: meta.seed,
            epochs: meta.epochs,
        })
    }

    /// SHA-256 over the decoder checkpoint bytes.
    pub fn decoder_hash(&self) -> String {
        hex(&Sha256::digest(self.decoder_params.to_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Wraps a flat origin-shaped batch as a `batch x L x width` tensor.
pub fn as_sequence_tensor(x: Vec<f64>, cfg: &SpaceConfig) -> Result<TensorBuf> {
    let m = cfg.origin_dim();
    let batch = x.len() / m.max(1);
    TensorBuf::new(vec![batch, cfg.layer_count, cfg.token_width()], x)
}
