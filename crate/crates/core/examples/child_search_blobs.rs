//! A short search with real child-network training on the synthetic blob
//! images, followed by final training of the best architecture.
//!
//! cargo run --release --example child_search_blobs -- [iterations]

use nases::search::{build_evaluator, final_train, pretrain_stage, run_search, SearchConfig, SearchOptions};

fn main() -> nases::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mut cfg = SearchConfig::from_toml(
        "[space]\nlayers = 3\nskips = true\n\
         [autoencoder]\nembed_dim = 8\nhidden_dim = 32\nepochs = 20\nbatches_per_epoch = 16\n\
         holdout_size = 128\nlr = 1e-3\nsampling = \"one_hot\"\n\
         [controller]\nsigma = 1.0\nlr = 3e-3\n\
         [evaluator]\nkind = \"child\"\ndata = \"blobs\"\nfilters = 8\nepochs_e1 = 2\nepochs_e2 = 8\n\
         batch_size = 64\nblobs_per_class = 60\nblobs_test_per_class = 20\n",
    )?;
    cfg.search.iterations = iterations;
    cfg.output.dir = std::env::temp_dir().join("nases-child-search");

    pretrain_stage(&cfg)?;
    let evaluator = build_evaluator(&cfg)?;
    let report = run_search(&cfg, evaluator.as_ref(), &SearchOptions::default())?;
    for r in &report.records {
        println!("iter {:>2}  reward {:.3}  advantage {:+.3}  {}", r.iter, r.reward, r.advantage, r.arch_json);
    }
    let best = report.best_architecture()?;
    println!("best {best} with validation accuracy {:.3}", report.best_reward);
    let fin = final_train(&cfg, &best)?;
    println!(
        "final test accuracy {:.3} with {} parameters after {} epochs",
        fin.value, fin.meta.param_count, fin.meta.epochs
    );
    Ok(())
}
