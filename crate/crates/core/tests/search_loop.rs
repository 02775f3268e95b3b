use std::fs;
use std::path::Path;

use nases::autoencoder::AutoencoderModel;
use nases::controller::ControllerModel;
use nases::evaluator::{EvalBudget, Evaluator, Reward};
use nases::search::{
    load_report, pretrain_stage, read_records_csv, render_summary, run_search, synthetic_oracle, SearchConfig,
    SearchOptions, CSV_HEADER,
};
use nases::space::{discretize, encode_origin, enumerate_space, Architecture};
use nases::{Error, Result};

fn config(root: &Path, iterations: usize) -> SearchConfig {
    let text = format!(
        "[space]\nlayers = 4\nskips = false\n\
         [autoencoder]\nembed_dim = 8\nhidden_dim = 16\nepochs = 3\nbatches_per_epoch = 8\n\
         holdout_size = 64\nlr = 1e-3\nsampling = \"one_hot\"\ncheckpoint = \"{}\"\n\
         [controller]\nsigma = 1.0\nlr = 3e-3\n\
         [search]\niterations = {iterations}\nseed = 5\n\
         [output]\ndir = \"{}\"\n",
        root.join("ae").display(),
        root.join("run").display()
    );
    SearchConfig::from_toml(&text).unwrap()
}

fn pretrained(iterations: usize) -> (tempfile::TempDir, SearchConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), iterations);
    pretrain_stage(&cfg).unwrap();
    (dir, cfg)
}

fn search(cfg: &SearchConfig, opts: &SearchOptions) -> Result<nases::search::SearchReport> {
    let oracle = synthetic_oracle(cfg, &cfg.space_config()?)?;
    run_search(cfg, &oracle, opts)
}

#[test]
fn identical_configs_give_identical_records() {
    let (dir, mut cfg) = pretrained(40);
    search(&cfg, &SearchOptions::default()).unwrap();
    let first = fs::read(cfg.output.dir.join("records.csv")).unwrap();
    cfg.output.dir = dir.path().join("again");
    search(&cfg, &SearchOptions::default()).unwrap();
    let second = fs::read(cfg.output.dir.join("records.csv")).unwrap();
    assert_eq!(first, second);
    let header = String::from_utf8(first).unwrap();
    assert_eq!(header.lines().next(), Some(CSV_HEADER.join(",").as_str()));
    assert_eq!(CSV_HEADER.join(","), "iter,arch_json,reward,baseline,advantage,grad_norm,wall_ms");
}

#[test]
fn resumed_search_matches_uninterrupted() {
    let (dir, mut cfg) = pretrained(60);
    let full = search(&cfg, &SearchOptions::default()).unwrap();
    cfg.output.dir = dir.path().join("split");
    let partial = search(
        &cfg,
        &SearchOptions {
            stop_after: Some(30),
            resume: false,
        },
    )
    .unwrap();
    assert_eq!(partial.records.len(), 30);
    let resumed = search(
        &cfg,
        &SearchOptions {
            stop_after: None,
            resume: true,
        },
    )
    .unwrap();
    assert_eq!(resumed.records, full.records);
    assert_eq!(
        fs::read(dir.path().join("run/records.csv")).unwrap(),
        fs::read(cfg.output.dir.join("records.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("run/controller/controller.bin")).unwrap(),
        fs::read(cfg.output.dir.join("controller/controller.bin")).unwrap()
    );
}

#[test]
fn single_iteration_only_sets_the_baseline() {
    let (_dir, cfg) = pretrained(1);
    let report = search(&cfg, &SearchOptions::default()).unwrap();
    assert_eq!(report.records.len(), 1);
    let r = &report.records[0];
    assert_eq!(r.advantage, 0.0);
    assert_eq!(r.baseline, r.reward);
    assert_eq!(r.grad_norm, 0.0);
    assert_eq!(r.wall_ms, 0);
    assert_eq!(report.initial_arch, r.arch_json);
    let c = ControllerModel::load(&cfg.output.dir.join("controller")).unwrap();
    assert_eq!(c.updates(), 0);
}

#[test]
fn next_architecture_is_the_decoded_action() {
    let (_dir, cfg) = pretrained(25);
    let report = search(&cfg, &SearchOptions::default()).unwrap();
    let ae = AutoencoderModel::load(&cfg.autoencoder_dir()).unwrap();
    let space = cfg.space_config().unwrap();
    for w in report.records.windows(2) {
        let next = discretize(&ae.decode(&w[0].embedding).unwrap(), &space).unwrap();
        assert_eq!(next.to_json(), w[1].arch_json);
    }
}

#[test]
fn decoder_is_frozen_during_search() {
    let (_dir, cfg) = pretrained(20);
    let before = AutoencoderModel::load(&cfg.autoencoder_dir()).unwrap().decoder_hash();
    let report = search(&cfg, &SearchOptions::default()).unwrap();
    let after = AutoencoderModel::load(&cfg.autoencoder_dir()).unwrap().decoder_hash();
    assert_eq!(before, after);
    assert_eq!(report.decoder_hash, before);
}

#[test]
fn best_so_far_is_monotonic_and_reported() {
    let (_dir, cfg) = pretrained(50);
    let report = search(&cfg, &SearchOptions::default()).unwrap();
    let curve = report.best_so_far();
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*curve.last().unwrap(), report.best_reward);
    let best_file = fs::read_to_string(cfg.output.dir.join("best_arch.json")).unwrap();
    assert_eq!(best_file, report.best_arch);
    assert_eq!(load_report(&cfg.output.dir).unwrap(), report);

    let summary = render_summary(&cfg.output.dir).unwrap();
    assert_eq!(summary.best_reward, report.best_reward);
    assert!(cfg.output.dir.join("summary.json").exists());
    let rows = fs::read_to_string(cfg.output.dir.join("best_so_far.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51);

    let csv = read_records_csv(&cfg.output.dir.join("records.csv")).unwrap();
    for (a, b) in csv.iter().zip(&report.records) {
        assert_eq!((a.iter, &a.arch_json, a.reward, a.advantage), (b.iter, &b.arch_json, b.reward, b.advantage));
    }
}

#[test]
fn resume_rejects_a_different_autoencoder() {
    let (dir, mut cfg) = pretrained(10);
    search(
        &cfg,
        &SearchOptions {
            stop_after: Some(5),
            resume: false,
        },
    )
    .unwrap();
    cfg.autoencoder.seed += 1;
    pretrain_stage(&cfg).unwrap();
    let err = search(
        &cfg,
        &SearchOptions {
            stop_after: None,
            resume: true,
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    drop(dir);
}

struct Failing;

impl Evaluator for Failing {
    fn evaluate(&self, _arch: &Architecture, _budget: &EvalBudget) -> Result<Reward> {
        Err(Error::EvaluationFailed("diverged".into()))
    }
}

#[test]
fn failed_evaluations_score_zero() {
    let (_dir, cfg) = pretrained(8);
    let report = run_search(&cfg, &Failing, &SearchOptions::default()).unwrap();
    assert!(report.records.iter().all(|r| r.reward == 0.0 && r.error.is_some()));
    assert_eq!(report.failed_evaluations, report.unique_evaluations);
}

#[test]
fn distinct_architectures_get_distinct_policy_means() {
    let (_dir, cfg) = pretrained(1);
    let ae = AutoencoderModel::load(&cfg.autoencoder_dir()).unwrap();
    let c = ControllerModel::init_from_simulator(&ae, 1.0, 0.95).unwrap();
    let space = cfg.space_config().unwrap();
    let all = enumerate_space(&space, None).unwrap();
    let a = c.policy_mean(encode_origin(&all[0], &space).unwrap().values()).unwrap();
    let b = c.policy_mean(encode_origin(&all[624], &space).unwrap().values()).unwrap();
    assert!(a.distance(&b) > 1e-6);
}

#[test]
fn missing_autoencoder_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 3);
    assert!(matches!(search(&cfg, &SearchOptions::default()), Err(Error::NotPretrained)));
}
