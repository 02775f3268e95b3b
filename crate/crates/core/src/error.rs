use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid origin vector: {0}")]
    InvalidVector(String),
    #[error("search space has {size} architectures, above the cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("batchnorm running statistics missing for layer `{0}`")]
    MissingStats(String),
    #[error("autoencoder has not been pretrained")]
    NotPretrained,
    #[error("policy sample from controller step {sample} is stale at step {current}")]
    StaleSample { sample: u64, current: u64 },
    #[error("evaluation failed: {0}")]
    EvaluationFailed(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
