//! Pretrains a small architecture autoencoder, prints the loss curve and the
//! fraction of random architectures that survive an encode/decode round trip.
//!
//! cargo run --release --example pretrain_autoencoder -- [uniform|one_hot] [epochs]

use nases::autoencoder::{pretrain, AutoencoderConfig, AutoencoderModel, PretrainConfig, PretrainSampling};
use nases::rng::derive_seed;
use nases::space::{discretize, encode_origin, random_architecture, SpaceConfig};

fn main() -> nases::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let sampling = match args.get(1).map(String::as_str) {
        Some("uniform") => PretrainSampling::Uniform,
        _ => PretrainSampling::OneHot,
    };
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);

    let space = SpaceConfig::new(5, true)?;
    let config = AutoencoderConfig {
        space,
        embed_dim: 16,
        hidden_dim: 64,
    };
    let mut model = AutoencoderModel::new(config, 1)?;
    let report = pretrain(
        &mut model,
        &PretrainConfig {
            epochs,
            batches_per_epoch: 32,
            holdout_size: 512,
            lr: 1e-3,
            sampling,
            ..Default::default()
        },
    )?;
    println!("epoch 0: holdout {:.5}", report.initial_holdout_mse);
    for e in report.loss_curve.iter().step_by(5) {
        println!("epoch {}: train {:.5} holdout {:.5}", e.epoch, e.train_mse, e.holdout_mse);
    }
    println!("holdout reduction {:.1}%", 100.0 * report.holdout_reduction());

    let trials = 200;
    let (mut exact, mut ops) = (0, 0);
    for i in 0..trials {
        let arch = random_architecture(&space, derive_seed(99, i));
        let e = model.encode(encode_origin(&arch, &space)?.values())?;
        let back = discretize(&model.decode(&e)?, &space)?;
        exact += usize::from(back == arch);
        ops += arch.ops().zip(back.ops()).filter(|(a, b)| a == b).count();
    }
    println!("{exact}/{trials} random architectures reconstructed exactly");
    println!("{:.1}% of layer operators recovered", 100.0 * ops as f64 / (trials as usize * space.layer_count) as f64);
    Ok(())
}
