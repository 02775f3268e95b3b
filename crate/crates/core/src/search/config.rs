use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderConfig, PretrainConfig, PretrainSampling};
use crate::controller::{DEFAULT_BASELINE_DECAY, DEFAULT_CONTROLLER_LR, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::evaluator::{AugmentConfig, ChildConfig, EvalBudget, TrainOptions};
use crate::kernel::LrSchedule;
use crate::space::SpaceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    pub layers: usize,
    pub skips: bool,
}

impl Default for SpaceSection {
    fn default() -> Self {
        SpaceSection { layers: 15, skips: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub holdout_size: usize,
    pub lr: f64,
    pub sampling: PretrainSampling,
    pub seed: u64,
    /// Existing checkpoint directory; defaults to `<output>/autoencoder`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let p = PretrainConfig::default();
        AutoencoderSection {
            embed_dim: 32,
            hidden_dim: 64,
            epochs: p.epochs,
            batches_per_epoch: p.batches_per_epoch,
            batch_size: p.batch_size,
            holdout_size: p.holdout_size,
            lr: p.lr,
            sampling: p.sampling,
            seed: p.seed,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub sigma: f64,
    pub lr: f64,
    pub baseline_decay: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            sigma: DEFAULT_SIGMA,
            lr: DEFAULT_CONTROLLER_LR,
            baseline_decay: DEFAULT_BASELINE_DECAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub iterations: usize,
    pub seed: u64,
    /// Record measured wall time; off keeps `records.csv` reproducible.
    pub log_wall_time: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            iterations: 300,
            seed: 0,
            log_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Synthetic,
    Child,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Seeded Gaussian-blob images.
    Blobs,
    /// CIFAR-10 binary files in `cifar_dir`.
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub kind: EvaluatorKind,
    /// Synthetic target as canonical JSON; a random architecture drawn with
    /// `target_seed` when absent.
    pub target: Option<String>,
    pub target_seed: u64,
    pub weights: Option<Vec<f64>>,

    pub epochs_e1: usize,
    pub epochs_e2: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub filters: usize,
    pub reductions: Option<Vec<usize>>,
    pub double_filters: bool,

    pub data: DataSource,
    pub cifar_dir: Option<PathBuf>,
    pub subset_per_class: Option<usize>,
    pub blobs_per_class: usize,
    pub blobs_test_per_class: usize,
    pub split_ratio: f64,
    pub split_seed: u64,

    pub augment: bool,
    pub cutout: Option<usize>,
    pub l_max: f64,
    pub l_min: f64,
    pub t0: u32,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        let budget = EvalBudget::default();
        let sched = LrSchedule::default();
        let opts = TrainOptions::default();
        EvaluatorSection {
            kind: EvaluatorKind::Synthetic,
            target: None,
            target_seed: 0,
            weights: None,
            epochs_e1: budget.epochs_e1,
            epochs_e2: budget.epochs_e2,
            batch_size: budget.batch_size,
            seed: budget.seed,
            filters: ChildConfig::default().filters,
            reductions: None,
            double_filters: true,
            data: DataSource::Blobs,
            cifar_dir: None,
            subset_per_class: None,
            blobs_per_class: 200,
            blobs_test_per_class: 50,
            split_ratio: 0.9,
            split_seed: 0,
            augment: true,
            cutout: None,
            l_max: sched.l_max,
            l_min: sched.l_min,
            t0: sched.t0,
            momentum: opts.momentum,
            weight_decay: opts.weight_decay,
        }
    }
}

impl EvaluatorSection {
    pub fn budget(&self) -> EvalBudget {
        EvalBudget {
            epochs_e1: self.epochs_e1,
            epochs_e2: self.epochs_e2,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn child_config(&self) -> ChildConfig {
        ChildConfig {
            filters: self.filters,
            reductions: self.reductions.clone(),
            double_filters: self.double_filters,
            ..Default::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            schedule: LrSchedule {
                l_max: self.l_max,
                l_min: self.l_min,
                t0: self.t0,
            },
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            augment: self.augment.then_some(AugmentConfig {
                cutout: self.cutout,
                ..Default::default()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("runs/default") }
    }
}

/// Everything a run needs, one TOML table per concern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub space: SpaceSection,
    pub autoencoder: AutoencoderSection,
    pub controller: ControllerSection,
    pub search: SearchSection,
    pub evaluator: EvaluatorSection,
    pub output: OutputSection,
}

impl SearchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SearchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn space_config(&self) -> Result<SpaceConfig> {
        SpaceConfig::new(self.space.layers, self.space.skips)
    }

    pub fn autoencoder_config(&self) -> Result<AutoencoderConfig> {
        let cfg = AutoencoderConfig {
            space: self.space_config()?,
            embed_dim: self.autoencoder.embed_dim,
            hidden_dim: self.autoencoder.hidden_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let a = &self.autoencoder;
        PretrainConfig {
            epochs: a.epochs,
            batches_per_epoch: a.batches_per_epoch,
            batch_size: a.batch_size,
            holdout_size: a.holdout_size,
            lr: a.lr,
            seed: a.seed,
            sampling: a.sampling,
        }
    }

    pub fn autoencoder_dir(&self) -> PathBuf {
        self.autoencoder
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.output.dir.join("autoencoder"))
    }

    pub fn validate(&self) -> Result<()> {
        self.autoencoder_config()?;
        if self.search.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let c = &self.controller;
        if !(c.sigma > 0.0 && c.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", c.sigma)));
        }
        if !(c.lr > 0.0 && c.lr.is_finite()) {
            return Err(Error::Config(format!("controller lr must be positive, got {}", c.lr)));
        }
        if !(c.baseline_decay > 0.0 && c.baseline_decay < 1.0) {
            return Err(Error::Config("baseline_decay must lie in (0, 1)".into()));
        }
        self.evaluator.budget().validate()?;
        self.evaluator.train_options().schedule.validate()?;
        if self.evaluator.kind == EvaluatorKind::Child
            && self.evaluator.data == DataSource::Cifar
            && self.evaluator.cifar_dir.is_none()
        {
            return Err(Error::Config("data = \"cifar\" needs cifar_dir".into()));
        }
        Ok(())
    }
}
