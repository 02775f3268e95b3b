use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::tensor::TensorBuf;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Samples `Normal(0, 2 / fan_in)`.
pub fn he_init(shape: &[usize], fan_in: usize, seed: u64) -> Result<TensorBuf> {
    he_init_with(shape, fan_in, &mut rng::seeded(seed))
}

pub fn he_init_with(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<TensorBuf> {
    if fan_in == 0 {
        return Err(Error::Config("fan_in must be at least 1".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    TensorBuf::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect())
}

/// Samples `Uniform(-bound, bound)`.
pub fn uniform_init(shape: &[usize], bound: f64, rng: &mut Rng) -> Result<TensorBuf> {
    let n = shape.iter().product();
    let data = if bound > 0.0 {
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
    } else {
        vec![0.0; n]
    };
    TensorBuf::new(shape.to_vec(), data)
}
