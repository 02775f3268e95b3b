//! The `nases` command line. Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autoencoder::PretrainSampling;
use crate::error::Error;
use crate::search::{
    build_evaluator, final_train, load_autoencoder, pretrain_stage, render_summary, run_search, synthetic_oracle,
    EvaluatorKind, SearchConfig, SearchOptions,
};
use crate::space::{enumerate_space, Architecture, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Parser)]
#[command(name = "nases", version, about = "Architecture search in a learned embedding space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain the architecture autoencoder.
    Pretrain(PretrainArgs),
    /// Run the search loop (pretraining first if no checkpoint exists).
    Search(SearchArgs),
    /// Retrain an architecture with the final budget and score it on the test split.
    FinalTrain(FinalArgs),
    /// Evaluate one architecture with the configured evaluator.
    EvalArch(EvalArgs),
    /// Brute-force a small space and write (architecture, reward) rows as CSV.
    Enumerate(EnumerateArgs),
    /// Summarize a run directory into summary.json and best_so_far.csv.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sampling {
    Uniform,
    OneHot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    Synthetic,
    Child,
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    /// Disable skip connections.
    #[arg(long)]
    no_skips: bool,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Output directory of the run.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorArg>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Controller learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many iterations in total, leaving a resumable checkpoint.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Debug, Args)]
struct FinalArgs {
    #[command(flatten)]
    common: Overrides,
    /// Architecture JSON; defaults to the run's best_arch.json.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Overrides,
    /// Architecture JSON.
    #[arg(long)]
    arch: String,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[command(flatten)]
    common: Overrides,
    /// Synthetic target architecture JSON.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    target_seed: Option<u64>,
    /// Refuse spaces larger than this.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP as u64)]
    cap: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory.
    #[arg(long)]
    run: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(o: &Overrides) -> Result<SearchConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::Usage(format!("config file {} does not exist", path.display())));
            }
            SearchConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => SearchConfig::default(),
    };
    if let Some(l) = o.layers {
        cfg.space.layers = l;
    }
    if o.no_skips {
        cfg.space.skips = false;
    }
    if let Some(n) = o.embed_dim {
        cfg.autoencoder.embed_dim = n;
    }
    if let Some(h) = o.hidden_dim {
        cfg.autoencoder.hidden_dim = h;
    }
    if let Some(dir) = &o.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(e) = o.evaluator {
        cfg.evaluator.kind = match e {
            EvaluatorArg::Synthetic => EvaluatorKind::Synthetic,
            EvaluatorArg::Child => EvaluatorKind::Child,
        };
    }
    Ok(cfg)
}

fn checked(cfg: SearchConfig) -> Result<SearchConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn parse_arch(json: &str) -> Result<Architecture, Failure> {
    Architecture::from_json(json).map_err(|e| Failure::Usage(e.to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Pretrain(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(e) = a.epochs {
                cfg.autoencoder.epochs = e;
            }
            if let Some(lr) = a.lr {
                cfg.autoencoder.lr = lr;
            }
            if let Some(s) = a.seed {
                cfg.autoencoder.seed = s;
            }
            if let Some(s) = a.sampling {
                cfg.autoencoder.sampling = match s {
                    Sampling::Uniform => PretrainSampling::Uniform,
                    Sampling::OneHot => PretrainSampling::OneHot,
                };
            }
            if let Some(dir) = &a.common.out {
                cfg.autoencoder.checkpoint = Some(dir.clone());
            }
            let cfg = checked(cfg)?;
            let (_, report) = pretrain_stage(&cfg)?;
            eprintln!(
                "holdout mse {:.6} -> {:.6}, checkpoint in {}",
                report.initial_holdout_mse,
                report.final_holdout_mse,
                cfg.autoencoder_dir().display()
            );
            print_json(&report)
        }
        Command::Search(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(n) = a.iterations {
                cfg.search.iterations = n;
            }
            if let Some(s) = a.seed {
                cfg.search.seed = s;
            }
            if let Some(s) = a.sigma {
                cfg.controller.sigma = s;
            }
            if let Some(lr) = a.lr {
                cfg.controller.lr = lr;
            }
            let cfg = checked(cfg)?;
            if matches!(load_autoencoder(&cfg), Err(Error::NotPretrained)) {
                eprintln!("no autoencoder at {}, pretraining first", cfg.autoencoder_dir().display());
                pretrain_stage(&cfg)?;
            }
            let evaluator = build_evaluator(&cfg)?;
            let opts = SearchOptions {
                stop_after: a.stop_after,
                resume: a.resume,
            };
            let report = run_search(&cfg, evaluator.as_ref(), &opts)?;
            eprintln!(
                "{} iterations, best reward {} at iteration {}",
                report.records.len(),
                report.best_reward,
                report.best_iter
            );
            println!("{}", report.best_arch);
            Ok(())
        }
        Command::FinalTrain(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(e) = a.epochs {
                cfg.evaluator.epochs_e2 = e;
            }
            let cfg = checked(cfg)?;
            let arch = match &a.arch {
                Some(json) => parse_arch(json)?,
                None => {
                    let path = cfg.output.dir.join("best_arch.json");
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Usage(format!("no --arch and cannot read {}: {e}", path.display())))?;
                    parse_arch(&text)?
                }
            };
            print_json(&final_train(&cfg, &arch)?)
        }
        Command::EvalArch(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(e) = a.epochs {
                cfg.evaluator.epochs_e1 = e;
            }
            let cfg = checked(cfg)?;
            let arch = parse_arch(&a.arch)?;
            arch.validate(&cfg.space_config()?)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let evaluator = build_evaluator(&cfg)?;
            print_json(&evaluator.evaluate(&arch, &cfg.evaluator.budget())?)
        }
        Command::Enumerate(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(t) = &a.target {
                cfg.evaluator.target = Some(t.clone());
            }
            if let Some(s) = a.target_seed {
                cfg.evaluator.target_seed = s;
            }
            let space = cfg.space_config().map_err(|e| Failure::Usage(e.to_string()))?;
            let archs = enumerate_space(&space, Some(a.cap as u128))?;
            let budget = cfg.evaluator.budget();
            let evaluator = match cfg.evaluator.kind {
                EvaluatorKind::Synthetic => Box::new(synthetic_oracle(&cfg, &space)?) as Box<dyn crate::evaluator::Evaluator>,
                EvaluatorKind::Child => build_evaluator(&checked(cfg.clone())?)?,
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["arch_json", "reward"]).map_err(Error::from)?;
            for arch in &archs {
                let reward = evaluator.evaluate(arch, &budget)?;
                w.write_record([arch.to_json(), reward.value.to_string()])
                    .map_err(Error::from)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            match &a.csv {
                Some(path) => crate::kernel::params::write_atomic(path, &bytes)?,
                None => std::io::stdout().write_all(&bytes).map_err(Error::from)?,
            }
            eprintln!("{} architectures", archs.len());
            Ok(())
        }
        Command::Report(a) => {
            if !a.run.join("report.json").exists() {
                return Err(Failure::Usage(format!("{} has no report.json", a.run.display())));
            }
            print_json(&render_summary(&a.run)?)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
