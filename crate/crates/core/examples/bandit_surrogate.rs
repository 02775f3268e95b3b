//! Trains the REINFORCE controller against a fixed linear decoder that pays 1
//! when layer 0 decodes to the max-pool operator.
//!
//! cargo run --release --example bandit_surrogate -- [seed]

use nases::autoencoder::SequenceEncoder;
use nases::controller::{run_bandit, BanditConfig, BanditSurrogate, ControllerModel};
use nases::kernel::ParamSet;
use nases::rng;
use nases::space::{encode_origin, random_architecture, OperatorKind, SpaceConfig};

fn main() -> nases::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let space = SpaceConfig::new(4, false)?;
    let encoder = SequenceEncoder::new(4, space.token_width(), 16, 8);
    let mut params = ParamSet::new();
    encoder.init(&mut params, &mut rng::seeded(seed))?;
    let mut controller = ControllerModel::from_encoder(encoder, params, 0.1, 0.95)?;
    let surrogate = BanditSurrogate::new(space, 8, OperatorKind::MaxPool3x3, 0, seed)?;
    let input = encode_origin(&random_architecture(&space, seed), &space)?.into_values();

    for steps in [0, 250, 500, 1000, 2000] {
        let mut c = controller.clone();
        let report = run_bandit(
            &mut c,
            &surrogate,
            &input,
            &BanditConfig {
                steps,
                seed,
                ..Default::default()
            },
        )?;
        println!("{steps:>5} steps: target frequency {:.3}", report.final_frequency);
        if steps == 2000 {
            controller = c;
        }
    }
    println!("baseline after training {:.3}", controller.baseline().unwrap_or(0.0));
    Ok(())
}
