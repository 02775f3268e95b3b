use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::{augment_batch, AugmentConfig};
use super::child::{ChildConfig, ChildNet};
use super::data::{PreparedData, CIFAR_CHANNELS, CIFAR_SIDE};
use super::{EvalBudget, Evaluator, Reward, RewardMeta};
use crate::error::{Error, Result};
use crate::kernel::conv::Dims4;
use crate::kernel::{nesterov_step, softmax_cross_entropy, LrSchedule, TensorBuf};
use crate::rng;
use crate::space::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Training-batch augmentation; `None` disables it.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            schedule: LrSchedule::default(),
            momentum: 0.9,
            weight_decay: 1e-4,
            augment: Some(AugmentConfig::default()),
        }
    }
}

const IMAGE_LEN: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;

fn gather(x: &[f64], y: &[usize], idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut xb = Vec::with_capacity(idx.len() * IMAGE_LEN);
    for &i in idx {
        xb.extend_from_slice(&x[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]);
    }
    (xb, idx.iter().map(|&i| y[i]).collect())
}

fn dims(n: usize) -> Dims4 {
    Dims4::new(n, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
}

/// Fraction of correctly classified images in inference mode; ties go to the
/// lowest class index.
pub fn evaluate_accuracy(net: &mut ChildNet, x: &[f64], y: &[usize], batch: usize) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty set".into()));
    }
    let classes = net.config.classes;
    let mut correct = 0usize;
    for start in (0..y.len()).step_by(batch.max(1)) {
        let end = (start + batch).min(y.len());
        let n = end - start;
        let (logits, _) = net.forward(&x[start * IMAGE_LEN..end * IMAGE_LEN], dims(n), false)?;
        for (row, &label) in logits.chunks(classes).zip(&y[start..end]) {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / y.len() as f64)
}

struct FitResult {
    loss_curve: Vec<f64>,
    accuracy_curve: Vec<f64>,
}

/// Nesterov SGD under the per-batch cosine schedule; evaluates on `(vx, vy)`
/// after every epoch when given.
fn fit(
    net: &mut ChildNet,
    x: &[f64],
    y: &[usize],
    val: Option<(&[f64], &[usize])>,
    epochs: usize,
    budget: &EvalBudget,
    opts: &TrainOptions,
) -> Result<FitResult> {
    if epochs == 0 {
        return Err(Error::Config("training needs at least one epoch".into()));
    }
    if y.is_empty() || x.len() != y.len() * IMAGE_LEN {
        return Err(Error::Config("training set is empty or malformed".into()));
    }
    opts.schedule.validate()?;
    let n = y.len();
    let bs = budget.batch_size;
    let batches = n.div_ceil(bs);
    let classes = net.config.classes;
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(epochs);
    let mut accuracy_curve = Vec::new();
    for epoch in 0..epochs {
        let epoch_seed = rng::derive_seed(budget.seed, epoch as u64);
        order.shuffle(&mut rng::seeded(epoch_seed));
        let mut total = 0.0;
        for b in 0..batches {
            let idx = &order[b * bs..((b + 1) * bs).min(n)];
            let (mut xb, yb) = gather(x, y, idx);
            let d = dims(idx.len());
            if let Some(aug) = &opts.augment {
                xb = augment_batch(&xb, d, aug, rng::derive_seed(epoch_seed, 1 + b as u64));
            }
            let lr = opts.schedule.at(epoch as f64 + b as f64 / batches as f64);
            let (logits, cache) = net.forward(&xb, d, true)?;
            let (loss, dl) = softmax_cross_entropy(&TensorBuf::new(vec![idx.len(), classes], logits)?, &yb)
                .map_err(|e| Error::EvaluationFailed(e.to_string()))?;
            if !loss.is_finite() {
                return Err(Error::EvaluationFailed(format!("training loss diverged at epoch {}", epoch + 1)));
            }
            total += loss * idx.len() as f64;
            let grads = net.backward(&cache.expect("training forward keeps a cache"), dl.data())?;
            if !grads.is_finite() {
                return Err(Error::EvaluationFailed(format!("non-finite gradient at epoch {}", epoch + 1)));
            }
            nesterov_step(&mut net.params, &grads, lr, opts.momentum, opts.weight_decay)?;
        }
        loss_curve.push(total / n as f64);
        if let Some((vx, vy)) = val {
            accuracy_curve.push(evaluate_accuracy(net, vx, vy, bs)?);
        }
    }
    Ok(FitResult {
        loss_curve,
        accuracy_curve,
    })
}

/// Trains for `budget.epochs_e1` epochs; the reward is the best validation
/// accuracy seen after any epoch.
pub fn train_child(net: &mut ChildNet, data: &PreparedData, budget: &EvalBudget, opts: &TrainOptions) -> Result<Reward> {
    budget.validate()?;
    let start = Instant::now();
    let fit = fit(
        net,
        &data.train_x,
        &data.train_y,
        Some((&data.val_x, &data.val_y)),
        budget.epochs_e1,
        budget,
        opts,
    )?;
    let best = fit.accuracy_curve.iter().copied().fold(0.0, f64::max);
    Reward::new(
        best,
        RewardMeta {
            last_accuracy: fit.accuracy_curve.last().copied(),
            loss_curve: fit.loss_curve,
            accuracy_curve: fit.accuracy_curve,
            param_count: net.param_count(),
            epochs: budget.epochs_e1,
            wall_ms: start.elapsed().as_millis() as u64,
        },
    )
}

/// Retrains `arch` from scratch on training plus validation images for
/// `budget.epochs_e2` epochs and scores it once on the test images.
pub fn run_final(
    arch: &Architecture,
    data: &PreparedData,
    child: &ChildConfig,
    budget: &EvalBudget,
    opts: &TrainOptions,
) -> Result<Reward> {
    budget.validate()?;
    if data.test_y.is_empty() {
        return Err(Error::Config("final training needs a test split".into()));
    }
    let start = Instant::now();
    let mut net = ChildNet::build(arch, child, budget.seed)?;
    let (x, y) = data.pooled();
    let fit = fit(&mut net, &x, &y, None, budget.epochs_e2, budget, opts)?;
    let acc = evaluate_accuracy(&mut net, &data.test_x, &data.test_y, budget.batch_size)?;
    Reward::new(
        acc,
        RewardMeta {
            loss_curve: fit.loss_curve,
            accuracy_curve: vec![acc],
            last_accuracy: Some(acc),
            param_count: net.param_count(),
            epochs: budget.epochs_e2,
            wall_ms: start.elapsed().as_millis() as u64,
        },
    )
}

/// Builds the child network of each architecture and trains it on a shared
/// prepared dataset.
#[derive(Debug, Clone)]
pub struct ChildEvaluator {
    pub data: Arc<PreparedData>,
    pub child: ChildConfig,
    pub options: TrainOptions,
}

impl Evaluator for ChildEvaluator {
    fn evaluate(&self, arch: &Architecture, budget: &EvalBudget) -> Result<Reward> {
        let mut net = ChildNet::build(arch, &self.child, budget.seed)?;
        train_child(&mut net, &self.data, budget, &self.options)
    }
}
