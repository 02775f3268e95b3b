//! Brute-forces the four-layer space without skips and ranks every
//! architecture under a synthetic oracle.
//!
//! cargo run --release --example enumerate_space -- [target_seed]

use nases::evaluator::SyntheticOracle;
use nases::space::{enumerate_space, random_architecture, space_size, SpaceConfig};

fn main() -> nases::Result<()> {
    let target_seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    for layers in 1..=6 {
        let with = space_size(&SpaceConfig::new(layers, true)?);
        let without = space_size(&SpaceConfig::new(layers, false)?);
        println!("L={layers}: {without} without skips, {with} with skips");
    }

    let space = SpaceConfig::new(4, false)?;
    let target = random_architecture(&space, target_seed);
    let oracle = SyntheticOracle::uniform(space, target.clone())?;
    let mut scored = enumerate_space(&space, None)?
        .into_iter()
        .map(|a| Ok((oracle.score(&a)?, a)))
        .collect::<nases::Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    println!("\ntarget {target}");
    for (rank, (score, arch)) in scored.iter().take(8).enumerate() {
        println!("{:>3}  {score:.2}  {arch}", rank + 1);
    }
    let mut histogram = std::collections::BTreeMap::new();
    for (s, _) in &scored {
        *histogram.entry(format!("{s:.2}")).or_insert(0) += 1;
    }
    println!("\nreward histogram {histogram:?}");
    Ok(())
}
