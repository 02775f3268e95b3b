//! Writes a two-record CIFAR-10 binary file, parses it back, and prepares a
//! normalized train/validation split. Pass a directory holding
//! `data_batch_1.bin`..`data_batch_5.bin` and `test_batch.bin` to load the
//! real dataset instead.
//!
//! cargo run --release --example cifar_format -- [cifar_dir]

use std::path::PathBuf;

use nases::evaluator::{
    load_cifar_binary, load_cifar_dir, split, synthetic_blobs, PreparedData, CIFAR_RECORD_BYTES,
};

fn main() -> nases::Result<()> {
    if let Some(dir) = std::env::args().nth(1) {
        let (train, test) = load_cifar_dir(&PathBuf::from(dir))?;
        println!("{} training and {} test images", train.len(), test.len());
        println!("class counts {:?}", train.class_counts());
        let s = split(&train, 0.9, 0, test)?;
        println!("split {} / {} / {}", s.train.len(), s.validation.len(), s.test.len());
        let data = PreparedData::new(&s)?;
        println!("channel mean {:?} std {:?}", data.stats.mean, data.stats.std);
        return Ok(());
    }

    let mut bytes = Vec::with_capacity(2 * CIFAR_RECORD_BYTES);
    for (label, shift) in [(3u8, 0usize), (8, 100)] {
        bytes.push(label);
        bytes.extend((0..3072).map(|i| ((i + shift) % 256) as u8));
    }
    let path = std::env::temp_dir().join("nases-fixture.bin");
    std::fs::write(&path, &bytes)?;
    let images = load_cifar_binary(&path)?;
    println!("fixture labels {:?}", images.labels);
    println!("first red row starts {:?}", &images.image(0)[..6]);
    println!("second image blue plane starts {:?}", &images.image(1)[2048..2054]);
    std::fs::remove_file(&path)?;

    let pool = synthetic_blobs(100, 0);
    let s = split(&pool, 0.9, 0, synthetic_blobs(10, 1))?;
    println!("blobs: {} train / {} validation / {} test", s.train.len(), s.validation.len(), s.test.len());
    let data = PreparedData::new(&s)?;
    println!("channel mean {:?} std {:?}", data.stats.mean, data.stats.std);
    Ok(())
}
