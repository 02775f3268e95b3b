//! Saves a parameter set in the binary checkpoint format, inspects its header
//! and round-trips an architecture through its canonical JSON.
//!
//! cargo run --release --example checkpoint_formats

use nases::kernel::{Dense, ParamSet};
use nases::rng;
use nases::space::{encode_origin, random_architecture, Architecture, SpaceConfig};

fn main() -> nases::Result<()> {
    let mut params = ParamSet::new();
    Dense::new("head", 4, 3).init(&mut params, &mut rng::seeded(0))?;
    let path = std::env::temp_dir().join("nases-params.bin");
    params.save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("{} bytes, magic {:?}", bytes.len(), String::from_utf8_lossy(&bytes[..8]));
    let back = ParamSet::load(&path)?;
    println!("tensors {:?}, identical: {}", back.names().collect::<Vec<_>>(), back == params);
    std::fs::remove_file(&path)?;

    let space = SpaceConfig::new(5, true)?;
    let arch = random_architecture(&space, 11);
    let json = arch.to_json();
    println!("{arch}\n{json}");
    println!("parsed back equal: {}", Architecture::from_json(&json)? == arch);
    let origin = encode_origin(&arch, &space)?;
    for i in 0..space.layer_count {
        println!("token {i}: {:?}", origin.token(&space, i));
    }
    Ok(())
}
