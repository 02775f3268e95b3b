//! The end-to-end search: pretraining, the REINFORCE loop over embeddings,
//! final retraining, run directories and reports.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{pretrain, AutoencoderModel, Embedding, PretrainReport};
use crate::controller::{ControllerModel, PolicySample};
use crate::error::{Error, Result};
use crate::evaluator::{
    load_cifar_dir, run_final, split, synthetic_blobs, ChildEvaluator, EvalBudget, Evaluator, LabeledImages,
    PreparedData, Reward, SyntheticOracle,
};
use crate::kernel::params::write_atomic;
use crate::rng;
use crate::space::{discretize, encode_origin, random_architecture, Architecture, SpaceConfig};

pub use config::{
    AutoencoderSection, ControllerSection, DataSource, EvaluatorKind, EvaluatorSection, OutputSection, SearchConfig,
    SearchSection, SpaceSection,
};
pub use report::{read_records_csv, render_summary, write_records_csv, RunSummary, CSV_HEADER};

const STATE_FILE: &str = "search_state.json";

/// One loop iteration: the evaluated architecture, its reward, the controller
/// update it triggered and the embedding sampled for the next iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub iter: usize,
    pub arch_json: String,
    pub reward: f64,
    pub baseline: f64,
    pub advantage: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
    pub embedding: Embedding,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub records: Vec<SearchRecord>,
    pub initial_arch: String,
    pub best_arch: String,
    pub best_reward: f64,
    pub best_iter: usize,
    /// Distinct architectures evaluated (rewards are memoized).
    pub unique_evaluations: usize,
    pub failed_evaluations: usize,
    pub decoder_hash: String,
    pub final_result: Option<Reward>,
}

impl SearchReport {
    /// Running maximum of the reward after each iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.reward);
                best
            })
            .collect()
    }

    pub fn best_architecture(&self) -> Result<Architecture> {
        Architecture::from_json(&self.best_arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SearchState {
    next_iter: usize,
    current_arch: String,
    initial_arch: String,
    pending: Option<PolicySample>,
    records: Vec<SearchRecord>,
    decoder_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchOptions {
    /// Stop (with a checkpoint) after this many iterations in total.
    pub stop_after: Option<usize>,
    /// Continue from an existing checkpoint in the output directory.
    pub resume: bool,
}

/// Builds the evaluator named by the configuration.
pub fn build_evaluator(cfg: &SearchConfig) -> Result<Box<dyn Evaluator>> {
    let space = cfg.space_config()?;
    let e = &cfg.evaluator;
    match e.kind {
        EvaluatorKind::Synthetic => Ok(Box::new(synthetic_oracle(cfg, &space)?)),
        EvaluatorKind::Child => Ok(Box::new(ChildEvaluator {
            data: Arc::new(prepare_data(e)?),
            child: e.child_config(),
            options: e.train_options(),
        })),
    }
}

pub fn synthetic_oracle(cfg: &SearchConfig, space: &SpaceConfig) -> Result<SyntheticOracle> {
    let e = &cfg.evaluator;
    let target = match &e.target {
        Some(json) => Architecture::from_json(json)?,
        None => random_architecture(space, e.target_seed),
    };
    match &e.weights {
        Some(w) => SyntheticOracle::new(*space, target, w.clone()),
        None => SyntheticOracle::uniform(*space, target),
    }
}

/// Loads or generates the images and applies the split and subset settings.
pub fn prepare_data(e: &EvaluatorSection) -> Result<PreparedData> {
    let (pool, test) = match e.data {
        DataSource::Blobs => (
            synthetic_blobs(e.blobs_per_class, e.split_seed),
            synthetic_blobs(e.blobs_test_per_class, rng::derive_seed(e.split_seed, 1)),
        ),
        DataSource::Cifar => {
            let dir = e
                .cifar_dir
                .as_ref()
                .ok_or_else(|| Error::Config("cifar_dir is not set".into()))?;
            load_cifar_dir(dir)?
        }
    };
    let (pool, test): (LabeledImages, LabeledImages) = match e.subset_per_class {
        Some(k) => (pool.subset_per_class(k), test.subset_per_class(k.div_ceil(5))),
        None => (pool, test),
    };
    PreparedData::new(&split(&pool, e.split_ratio, e.split_seed, test)?)
}

/// Trains the autoencoder described by `cfg` and saves it to its checkpoint directory.
pub fn pretrain_stage(cfg: &SearchConfig) -> Result<(AutoencoderModel, PretrainReport)> {
    let mut model = AutoencoderModel::new(cfg.autoencoder_config()?, cfg.autoencoder.seed)?;
    let report = pretrain(&mut model, &cfg.pretrain_config())?;
    let dir = cfg.autoencoder_dir();
    model.save(&dir)?;
    write_atomic(&dir.join("pretrain_report.json"), &serde_json::to_vec_pretty(&report)?)?;
    Ok((model, report))
}

/// Loads the pretrained autoencoder and checks it against the configuration.
pub fn load_autoencoder(cfg: &SearchConfig) -> Result<AutoencoderModel> {
    let ae = AutoencoderModel::load(&cfg.autoencoder_dir())?;
    if !ae.is_pretrained() {
        return Err(Error::NotPretrained);
    }
    if ae.config != cfg.autoencoder_config()? {
        return Err(Error::Config("autoencoder checkpoint does not match the configured space or sizes".into()));
    }
    Ok(ae)
}

fn save_state(dir: &Path, state: &SearchState, controller: &ControllerModel) -> Result<()> {
    controller.save(&dir.join("controller"))?;
    write_records_csv(&dir.join("records.csv"), &state.records)?;
    write_atomic(&dir.join(STATE_FILE), &serde_json::to_vec_pretty(state)?)
}

fn evaluate_memo(
    evaluator: &dyn Evaluator,
    arch: &Architecture,
    budget: &EvalBudget,
    memo: &mut BTreeMap<String, (f64, Option<String>)>,
) -> (f64, Option<String>) {
    let key = arch.to_json();
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match evaluator.evaluate(arch, budget) {
        Ok(r) if r.value.is_finite() => (r.value, None),
        Ok(r) => (0.0, Some(format!("non-finite reward {}", r.value))),
        Err(e) => (0.0, Some(e.to_string())),
    };
    memo.insert(key, out.clone());
    out
}

/// Runs the search loop: evaluate the current architecture, update the
/// controller with the previous sample, sample an embedding from the current
/// architecture, decode and discretize it into the next architecture.
pub fn run_search(cfg: &SearchConfig, evaluator: &dyn Evaluator, opts: &SearchOptions) -> Result<SearchReport> {
    cfg.validate()?;
    let space = cfg.space_config()?;
    let ae = load_autoencoder(cfg)?;
    let out = &cfg.output.dir;
    fs::create_dir_all(out)?;
    write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let hash_before = ae.decoder_hash();
    let budget = cfg.evaluator.budget();
    let lr = cfg.controller.lr;

    let (mut state, mut controller) = if opts.resume && out.join(STATE_FILE).exists() {
        let state: SearchState = serde_json::from_slice(&fs::read(out.join(STATE_FILE))?)
            .map_err(|e| Error::Checkpoint(format!("search state: {e}")))?;
        if state.decoder_hash != hash_before {
            return Err(Error::Checkpoint("autoencoder changed since the checkpoint".into()));
        }
        let controller = ControllerModel::load(&out.join("controller"))?;
        (state, controller)
    } else {
        let controller = ControllerModel::init_from_simulator(&ae, cfg.controller.sigma, cfg.controller.baseline_decay)?;
        let initial = random_architecture(&space, rng::derive_seed(cfg.search.seed, u64::MAX)).to_json();
        let state = SearchState {
            next_iter: 1,
            current_arch: initial.clone(),
            initial_arch: initial,
            pending: None,
            records: Vec::new(),
            decoder_hash: hash_before.clone(),
        };
        (state, controller)
    };
    let mut memo: BTreeMap<String, (f64, Option<String>)> = BTreeMap::new();
    for r in &state.records {
        memo.insert(r.arch_json.clone(), (r.reward, r.error.clone()));
    }

    let last = opts
        .stop_after
        .map_or(cfg.search.iterations, |s| s.min(cfg.search.iterations));
    while state.next_iter <= last {
        let t = state.next_iter;
        let start = Instant::now();
        let arch = Architecture::from_json(&state.current_arch)?;
        let (reward, error) = evaluate_memo(evaluator, &arch, &budget, &mut memo);

        let (advantage, grad_norm) = match state.pending.take() {
            Some(sample) => {
                let rep = controller.reinforce_update(&sample, reward, lr)?;
                (rep.advantage, rep.grad_norm)
            }
            None => {
                controller.update_baseline(reward);
                (0.0, 0.0)
            }
        };
        let baseline = controller.baseline().unwrap_or(reward);

        let input = encode_origin(&arch, &space)?.into_values();
        let sample = controller.sample_action(&input, rng::derive_seed(cfg.search.seed, t as u64))?;
        let next = discretize(&ae.decode(&sample.action)?, &space)?;

        state.records.push(SearchRecord {
            iter: t,
            arch_json: state.current_arch.clone(),
            reward,
            baseline,
            advantage,
            grad_norm,
            wall_ms: if cfg.search.log_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
            embedding: sample.action.clone(),
            error,
        });
        state.pending = Some(sample);
        state.current_arch = next.to_json();
        state.next_iter += 1;
        save_state(out, &state, &controller)?;
    }

    if ae.decoder_hash() != hash_before {
        return Err(Error::Checkpoint("decoder parameters changed during search".into()));
    }
    let report = build_report(&state, &memo)?;
    write_atomic(&out.join("report.json"), &serde_json::to_vec_pretty(&report)?)?;
    write_atomic(&out.join("best_arch.json"), report.best_arch.as_bytes())?;
    Ok(report)
}

fn build_report(state: &SearchState, memo: &BTreeMap<String, (f64, Option<String>)>) -> Result<SearchReport> {
    let best = state
        .records
        .iter()
        .fold(None::<&SearchRecord>, |acc, r| match acc {
            Some(b) if b.reward >= r.reward => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Config("no iterations were run".into()))?;
    Ok(SearchReport {
        records: state.records.clone(),
        initial_arch: state.initial_arch.clone(),
        best_arch: best.arch_json.clone(),
        best_reward: best.reward,
        best_iter: best.iter,
        unique_evaluations: memo.len(),
        failed_evaluations: memo.values().filter(|(_, e)| e.is_some()).count(),
        decoder_hash: state.decoder_hash.clone(),
        final_result: None,
    })
}

/// Retrains the best architecture of a finished run with the final budget
/// and stores the result in `report.json`.
pub fn final_train(cfg: &SearchConfig, arch: &Architecture) -> Result<Reward> {
    arch.validate(&cfg.space_config()?)?;
    let data = prepare_data(&cfg.evaluator)?;
    let e = &cfg.evaluator;
    let reward = run_final(arch, &data, &e.child_config(), &e.budget(), &e.train_options())?;
    let path = cfg.output.dir.join("report.json");
    if path.exists() {
        let mut report: SearchReport = serde_json::from_slice(&fs::read(&path)?)?;
        report.final_result = Some(reward.clone());
        write_atomic(&path, &serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(reward)
}

/// Best-so-far rewards of `iterations` uniformly random architectures.
pub fn random_search(
    space: &SpaceConfig,
    evaluator: &dyn Evaluator,
    budget: &EvalBudget,
    iterations: usize,
    seed: u64,
) -> Vec<f64> {
    let mut memo = BTreeMap::new();
    let mut best = f64::NEG_INFINITY;
    (0..iterations)
        .map(|i| {
            let arch = random_architecture(space, rng::derive_seed(seed, i as u64));
            best = best.max(evaluate_memo(evaluator, &arch, budget, &mut memo).0);
            best
        })
        .collect()
}

/// Reads `report.json` from a run directory.
pub fn load_report(dir: &Path) -> Result<SearchReport> {
    Ok(serde_json::from_slice(&fs::read(dir.join("report.json"))?)?)
}

pub fn run_dir_files(dir: &Path) -> Vec<PathBuf> {
    ["config.toml", "records.csv", "report.json", "best_arch.json", "autoencoder", "controller"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}
