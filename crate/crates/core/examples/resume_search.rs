//! Stops a search halfway, resumes it from the checkpoint and checks that the
//! records match an uninterrupted run byte for byte.
//!
//! cargo run --release --example resume_search

use nases::search::{pretrain_stage, run_search, synthetic_oracle, SearchConfig, SearchOptions};

fn main() -> nases::Result<()> {
    let tmp = tempfile::tempdir()?;
    let work = tmp.path();
    let mut cfg = SearchConfig::from_toml(
        "[space]\nlayers = 4\nskips = false\n\
         [autoencoder]\nembed_dim = 8\nhidden_dim = 32\nepochs = 10\nbatches_per_epoch = 16\n\
         holdout_size = 128\nlr = 1e-3\nsampling = \"one_hot\"\n\
         [search]\niterations = 80\nseed = 4\n",
    )?;
    cfg.autoencoder.checkpoint = Some(work.join("autoencoder"));
    pretrain_stage(&cfg)?;
    let oracle = synthetic_oracle(&cfg, &cfg.space_config()?)?;

    cfg.output.dir = work.join("straight");
    run_search(&cfg, &oracle, &SearchOptions::default())?;

    cfg.output.dir = work.join("interrupted");
    let first = run_search(
        &cfg,
        &oracle,
        &SearchOptions {
            stop_after: Some(40),
            resume: false,
        },
    )?;
    println!("stopped after {} iterations", first.records.len());
    let resumed = run_search(
        &cfg,
        &oracle,
        &SearchOptions {
            stop_after: None,
            resume: true,
        },
    )?;
    println!("resumed to {} iterations", resumed.records.len());

    let a = std::fs::read(work.join("straight/records.csv"))?;
    let b = std::fs::read(work.join("interrupted/records.csv"))?;
    println!("records.csv identical: {} ({} bytes)", a == b, a.len());
    Ok(())
}

