//! Full pipeline on the synthetic oracle: pretrain the autoencoder, run the
//! search, rank the result against the brute-forced space and compare with
//! random search under the same budget.
//!
//! cargo run --release --example search_synthetic -- [seed] [iterations]

use nases::evaluator::EvalBudget;
use nases::search::{pretrain_stage, random_search, run_search, synthetic_oracle, SearchConfig, SearchOptions};
use nases::space::enumerate_space;

const CONFIG: &str = r#"
[space]
layers = 4
skips = false

[autoencoder]
embed_dim = 8
hidden_dim = 64
epochs = 100
batches_per_epoch = 64
holdout_size = 512
lr = 1e-3
sampling = "one_hot"

[controller]
sigma = 2.0
lr = 3e-3
"#;

fn main() -> nases::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let iterations = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);

    let work = std::env::temp_dir().join(format!("nases-search-synthetic-{seed}"));
    let mut cfg = SearchConfig::from_toml(CONFIG)?;
    cfg.search.seed = seed;
    cfg.search.iterations = iterations;
    cfg.evaluator.target_seed = seed;
    cfg.output.dir = work.clone();

    let (_, pre) = pretrain_stage(&cfg)?;
    println!("autoencoder holdout mse {:.4} -> {:.4}", pre.initial_holdout_mse, pre.final_holdout_mse);

    let space = cfg.space_config()?;
    let oracle = synthetic_oracle(&cfg, &space)?;
    let report = run_search(&cfg, &oracle, &SearchOptions::default())?;
    let all = enumerate_space(&space, None)?;
    let mut rank = 0;
    for a in &all {
        rank += usize::from(oracle.score(a)? >= report.best_reward);
    }
    let random = random_search(&space, &oracle, &EvalBudget::default(), iterations, seed);

    println!("best {} at iteration {}: {}", report.best_reward, report.best_iter, report.best_arch);
    println!("rank {rank} of {} ({} distinct architectures visited)", all.len(), report.unique_evaluations);
    let curve = report.best_so_far();
    for t in [9, 49, 99, iterations - 1] {
        if t < iterations {
            println!("iteration {:>3}: search {:.2}  random {:.2}", t + 1, curve[t], random[t]);
        }
    }
    println!("run written to {}", work.display());
    Ok(())
}
