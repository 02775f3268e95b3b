//! Trains a small child network on the synthetic blob dataset and prints the
//! per-epoch training loss and validation accuracy.
//!
//! cargo run --release --example child_smoke -- [epochs] [images]

use std::sync::Arc;

use nases::evaluator::{
    split, synthetic_blobs, ChildConfig, ChildEvaluator, EvalBudget, Evaluator, PreparedData, TrainOptions,
};
use nases::space::{random_architecture, SpaceConfig};

fn main() -> nases::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let images: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);

    let pool = synthetic_blobs(images / 10, 0);
    let data = PreparedData::new(&split(&pool, 0.9, 0, synthetic_blobs(20, 1))?)?;
    let space = SpaceConfig::new(4, false)?;
    let arch = random_architecture(&space, 3);
    println!("architecture {arch}");

    let evaluator = ChildEvaluator {
        data: Arc::new(data),
        child: ChildConfig {
            filters: 8,
            ..Default::default()
        },
        options: TrainOptions::default(),
    };
    let budget = EvalBudget {
        epochs_e1: epochs,
        batch_size: 128,
        ..Default::default()
    };
    let reward = evaluator.evaluate(&arch, &budget)?;
    for (e, (loss, acc)) in reward.meta.loss_curve.iter().zip(&reward.meta.accuracy_curve).enumerate() {
        println!("epoch {:>2}  loss {loss:.4}  val acc {acc:.3}", e + 1);
    }
    println!(
        "reward {:.3}  params {}  {} ms",
        reward.value, reward.meta.param_count, reward.meta.wall_ms
    );
    Ok(())
}
