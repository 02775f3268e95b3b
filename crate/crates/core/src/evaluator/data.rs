use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_CLASSES: usize = 10;
const IMAGE_BYTES: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;
/// One label byte followed by the red, green and blue planes.
pub const CIFAR_RECORD_BYTES: usize = 1 + IMAGE_BYTES;

/// Raw 32x32 RGB images in channel-major order with labels `0..10`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledImages {
    pub labels: Vec<u8>,
    /// `len() * 3072` bytes, CHW per image.
    pub pixels: Vec<u8>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    pub fn select(&self, indices: &[usize]) -> LabeledImages {
        let mut out = LabeledImages::default();
        for &i in indices {
            out.labels.push(self.labels[i]);
            out.pixels.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn extend(&mut self, other: &LabeledImages) {
        self.labels.extend_from_slice(&other.labels);
        self.pixels.extend_from_slice(&other.pixels);
    }

    /// The first `k` images of every class, in original order.
    pub fn subset_per_class(&self, k: usize) -> LabeledImages {
        let mut seen = [0usize; CIFAR_CLASSES];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = self.labels[i] as usize;
                seen[c] += 1;
                seen[c] <= k
            })
            .collect();
        self.select(&keep)
    }

    pub fn class_counts(&self) -> [usize; CIFAR_CLASSES] {
        let mut counts = [0; CIFAR_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Parses concatenated CIFAR-10 binary records.
pub fn parse_cifar(bytes: &[u8]) -> Result<LabeledImages> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut out = LabeledImages {
        labels: Vec::with_capacity(n),
        pixels: Vec::with_capacity(n * IMAGE_BYTES),
    };
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] as usize >= CIFAR_CLASSES {
            return Err(Error::Format(format!("record {i} has label {}", rec[0])));
        }
        out.labels.push(rec[0]);
        out.pixels.extend_from_slice(&rec[1..]);
    }
    Ok(out)
}

pub fn load_cifar_binary(path: &Path) -> Result<LabeledImages> {
    parse_cifar(&fs::read(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads `data_batch_1.bin` .. `data_batch_5.bin` and `test_batch.bin`.
pub fn load_cifar_dir(dir: &Path) -> Result<(LabeledImages, LabeledImages)> {
    let mut train = LabeledImages::default();
    for i in 1..=5 {
        train.extend(&load_cifar_binary(&dir.join(format!("data_batch_{i}.bin")))?);
    }
    let test = load_cifar_binary(&dir.join("test_batch.bin"))?;
    Ok((train, test))
}

const BLOB_PALETTE_SEED: u64 = 0x5eed_b10b;

/// Ten-class images of one Gaussian blob on a noisy background. Each class
/// has its own blob colour and width, identical for every seed; position and
/// noise come from `seed`.
pub fn synthetic_blobs(per_class: usize, seed: u64) -> LabeledImages {
    let mut p = rng::seeded(BLOB_PALETTE_SEED);
    let palette: Vec<[f64; 3]> = (0..CIFAR_CLASSES)
        .map(|_| [p.gen_range(0.0..255.0), p.gen_range(0.0..255.0), p.gen_range(0.0..255.0)])
        .collect();
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, 12.0).expect("positive std");
    let mut out = LabeledImages::default();
    for i in 0..per_class * CIFAR_CLASSES {
        let class = i % CIFAR_CLASSES;
        let sigma = 3.0 + class as f64 * 0.4;
        let cy = r.gen_range(6.0..26.0);
        let cx = r.gen_range(6.0..26.0);
        out.labels.push(class as u8);
        for colour in palette[class] {
            for y in 0..CIFAR_SIDE {
                for x in 0..CIFAR_SIDE {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let w = (-d2 / (2.0 * sigma * sigma)).exp();
                    let v = 128.0 * (1.0 - w) + colour * w + noise.sample(&mut r);
                    out.pixels.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: LabeledImages,
    pub validation: LabeledImages,
    pub test: LabeledImages,
    pub split_seed: u64,
}

/// Seeded permutation of `pool` into `round(ratio * n)` training and the
/// rest validation images.
pub fn split(pool: &LabeledImages, ratio: f64, seed: u64, test: LabeledImages) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = (ratio * pool.len() as f64).round() as usize;
    Ok(DatasetSplit {
        train: pool.select(&order[..n_train]),
        validation: pool.select(&order[n_train..]),
        test,
        split_seed: seed,
    })
}

/// Per-channel mean and standard deviation in raw byte units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; CIFAR_CHANNELS],
    pub std: [f64; CIFAR_CHANNELS],
}

impl ChannelStats {
    pub fn from_images(images: &LabeledImages) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("cannot compute statistics of an empty set".into()));
        }
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        let count = (images.len() * plane) as f64;
        let mut mean = [0.0; CIFAR_CHANNELS];
        let mut std = [0.0; CIFAR_CHANNELS];
        for i in 0..images.len() {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += images.image(i)[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for i in 0..images.len() {
            for (c, s) in std.iter_mut().enumerate() {
                *s += images.image(i)[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|&v| (v as f64 - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
        for (c, s) in std.iter_mut().enumerate() {
            *s = (*s / count).sqrt();
            if *s == 0.0 {
                return Err(Error::Numeric(format!("channel {c} is constant")));
            }
        }
        Ok(ChannelStats { mean, std })
    }

    /// `(x - mean) / std` per channel, as NCHW `f64`.
    pub fn normalize(&self, images: &LabeledImages) -> Vec<f64> {
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        images
            .pixels
            .chunks(plane)
            .enumerate()
            .flat_map(|(k, p)| {
                let c = k % CIFAR_CHANNELS;
                p.iter().map(move |&v| (v as f64 - self.mean[c]) / self.std[c])
            })
            .collect()
    }
}

/// Normalized tensors of a split, with statistics taken from its training part.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub stats: ChannelStats,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub val_x: Vec<f64>,
    pub val_y: Vec<usize>,
    pub test_x: Vec<f64>,
    pub test_y: Vec<usize>,
}

fn labels(images: &LabeledImages) -> Vec<usize> {
    images.labels.iter().map(|&l| l as usize).collect()
}

impl PreparedData {
    pub fn new(split: &DatasetSplit) -> Result<Self> {
        if split.train.is_empty() || split.validation.is_empty() {
            return Err(Error::Config("training and validation sets must be non-empty".into()));
        }
        let stats = ChannelStats::from_images(&split.train)?;
        Ok(PreparedData {
            stats,
            train_x: stats.normalize(&split.train),
            train_y: labels(&split.train),
            val_x: stats.normalize(&split.validation),
            val_y: labels(&split.validation),
            test_x: stats.normalize(&split.test),
            test_y: labels(&split.test),
        })
    }

    /// Training plus validation, normalized with the training statistics,
    /// for final retraining.
    pub fn pooled(&self) -> (Vec<f64>, Vec<usize>) {
        let mut x = self.train_x.clone();
        x.extend_from_slice(&self.val_x);
        let mut y = self.train_y.clone();
        y.extend_from_slice(&self.val_y);
        (x, y)
    }
}
