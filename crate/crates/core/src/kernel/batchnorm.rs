use super::conv::Dims4;
use super::params::{Gradients, ParamSet};
use super::tensor::TensorBuf;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over batch and spatial positions.
/// Trainable `{prefix}.gamma` / `{prefix}.beta`; running statistics live in
/// buffers `{prefix}.running_mean` / `{prefix}.running_var` and are created by
/// the first training-mode pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchNorm {
    pub prefix: String,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(prefix: impl Into<String>, channels: usize) -> Self {
        BatchNorm {
            prefix: prefix.into(),
            channels,
        }
    }

    pub fn gamma_name(&self) -> String {
        format!("{}.gamma", self.prefix)
    }

    pub fn beta_name(&self) -> String {
        format!("{}.beta", self.prefix)
    }

    fn mean_name(&self) -> String {
        format!("{}.running_mean", self.prefix)
    }

    fn var_name(&self) -> String {
        format!("{}.running_var", self.prefix)
    }

    /// Scale one, shift zero.
    pub fn init(&self, params: &mut ParamSet) {
        params.insert(self.gamma_name(), TensorBuf::filled(&[self.channels], 1.0));
        params.insert(self.beta_name(), TensorBuf::zeros(&[self.channels]));
    }

    fn affine<'a>(&self, params: &'a ParamSet, d: Dims4) -> Result<(&'a [f64], &'a [f64])> {
        if d.c != self.channels {
            return Err(Error::Shape(format!(
                "batchnorm `{}` expects {} channels, got {}",
                self.prefix, self.channels, d.c
            )));
        }
        Ok((
            params.get(&self.gamma_name())?.data(),
            params.get(&self.beta_name())?.data(),
        ))
    }

    pub fn forward_train(&self, params: &mut ParamSet, x: &[f64], d: Dims4) -> Result<(Vec<f64>, BnCache)> {
        let (gamma, beta) = self.affine(params, d)?;
        let hw = d.plane();
        let count = (d.n * hw) as f64;
        let mut mean = vec![0.0; d.c];
        let mut var = vec![0.0; d.c];
        for n in 0..d.n {
            for c in 0..d.c {
                mean[c] += x[(n * d.c + c) * hw..][..hw].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for n in 0..d.n {
            for c in 0..d.c {
                var[c] += x[(n * d.c + c) * hw..][..hw]
                    .iter()
                    .map(|v| (v - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; d.len()];
        let mut y = vec![0.0; d.len()];
        for n in 0..d.n {
            for c in 0..d.c {
                let base = (n * d.c + c) * hw;
                for i in base..base + hw {
                    xhat[i] = (x[i] - mean[c]) * inv_std[c];
                    y[i] = gamma[c] * xhat[i] + beta[c];
                }
            }
        }

        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        match params.buffer_mut(&self.mean_name()) {
            Some(rm) => {
                for (r, m) in rm.data_mut().iter_mut().zip(&mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
                }
            }
            None => params.set_buffer(self.mean_name(), TensorBuf::new(vec![d.c], mean)?),
        }
        let var_u: Vec<f64> = var.iter().map(|v| v * unbias).collect();
        match params.buffer_mut(&self.var_name()) {
            Some(rv) => {
                for (r, v) in rv.data_mut().iter_mut().zip(&var_u) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                }
            }
            None => params.set_buffer(self.var_name(), TensorBuf::new(vec![d.c], var_u)?),
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    pub fn forward_eval(&self, params: &ParamSet, x: &[f64], d: Dims4) -> Result<Vec<f64>> {
        let (gamma, beta) = self.affine(params, d)?;
        let missing = || Error::MissingStats(self.prefix.clone());
        let rm = params.buffer(&self.mean_name()).ok_or_else(missing)?.data();
        let rv = params.buffer(&self.var_name()).ok_or_else(missing)?.data();
        let hw = d.plane();
        let mut y = vec![0.0; d.len()];
        for n in 0..d.n {
            for c in 0..d.c {
                let scale = gamma[c] / (rv[c] + BN_EPS).sqrt();
                let base = (n * d.c + c) * hw;
                for i in base..base + hw {
                    y[i] = (x[i] - rm[c]) * scale + beta[c];
                }
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &BnCache,
        d: Dims4,
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let (gamma, _) = self.affine(params, d)?;
        let hw = d.plane();
        let count = (d.n * hw) as f64;
        let mut dgamma = vec![0.0; d.c];
        let mut dbeta = vec![0.0; d.c];
        for n in 0..d.n {
            for c in 0..d.c {
                let base = (n * d.c + c) * hw;
                for i in base..base + hw {
                    dgamma[c] += dy[i] * cache.xhat[i];
                    dbeta[c] += dy[i];
                }
            }
        }
        let mut dx = vec![0.0; d.len()];
        for n in 0..d.n {
            for c in 0..d.c {
                let base = (n * d.c + c) * hw;
                // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
                let k = gamma[c] * cache.inv_std[c] / count;
                for i in base..base + hw {
                    dx[i] = k * (count * dy[i] - dbeta[c] - cache.xhat[i] * dgamma[c]);
                }
            }
        }
        for (g, v) in grads.slot(&self.gamma_name())?.iter_mut().zip(&dgamma) {
            *g += v;
        }
        for (g, v) in grads.slot(&self.beta_name())?.iter_mut().zip(&dbeta) {
            *g += v;
        }
        Ok(dx)
    }

    /// Tensor-level entry point; training mode updates the running statistics.
    pub fn forward(&self, params: &mut ParamSet, x: &TensorBuf, training: bool) -> Result<TensorBuf> {
        let d = Dims4::of(x)?;
        let y = if training {
            self.forward_train(params, x.data(), d)?.0
        } else {
            self.forward_eval(params, x.data(), d)?
        };
        TensorBuf::new(d.shape(), y)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::kernel::gradcheck::{finite_diff_grad, finite_diff_input, gradients_relative_error, relative_error};
    use crate::rng;

    fn random_input(seed: u64, d: Dims4) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..d.len()).map(|_| r.gen_range(-3.0..5.0)).collect()
    }

    #[test]
    fn normalizes_per_channel() {
        let d = Dims4::new(2, 3, 4, 4);
        let bn = BatchNorm::new("bn", 3);
        let mut p = ParamSet::new();
        bn.init(&mut p);
        let (y, _) = bn.forward_train(&mut p, &random_input(1, d), d).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|n| y[(n * 3 + c) * 16..][..16].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 32.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_channel_maps_to_shift() {
        let d = Dims4::new(2, 1, 3, 3);
        let bn = BatchNorm::new("bn", 1);
        let mut p = ParamSet::new();
        bn.init(&mut p);
        p.get_mut("bn.beta").unwrap().data_mut()[0] = 0.25;
        let (y, _) = bn.forward_train(&mut p, &vec![4.0; d.len()], d).unwrap();
        assert!(y.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn inference_requires_statistics() {
        let d = Dims4::new(1, 2, 2, 2);
        let bn = BatchNorm::new("bn", 2);
        let mut p = ParamSet::new();
        bn.init(&mut p);
        let x = TensorBuf::filled(&d.shape(), 1.0);
        assert!(matches!(bn.forward(&mut p, &x, false), Err(Error::MissingStats(_))));
        bn.forward(&mut p, &x, true).unwrap();
        bn.forward(&mut p, &x, false).unwrap();
    }

    #[test]
    fn running_statistics_momentum() {
        let d = Dims4::new(1, 1, 1, 2);
        let bn = BatchNorm::new("bn", 1);
        let mut p = ParamSet::new();
        bn.init(&mut p);
        bn.forward_train(&mut p, &[1.0, 3.0], d).unwrap();
        bn.forward_train(&mut p, &[5.0, 7.0], d).unwrap();
        let rm = p.buffer("bn.running_mean").unwrap().data()[0];
        assert!((rm - (0.9 * 2.0 + 0.1 * 6.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = Dims4::new(2, 3, 4, 4);
        let bn = BatchNorm::new("bn", 3);
        let mut p = ParamSet::new();
        bn.init(&mut p);
        let mut r = rng::seeded(4);
        for v in p.get_mut("bn.gamma").unwrap().data_mut() {
            *v = r.gen_range(0.5..1.5);
        }
        for v in p.get_mut("bn.beta").unwrap().data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
        let x = random_input(2, d);
        let up: Vec<f64> = (0..d.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let loss = |q: &ParamSet, v: &[f64]| -> Result<f64> {
            let mut q = q.clone();
            let (y, _) = bn.forward_train(&mut q, v, d)?;
            Ok(y.iter().zip(&up).map(|(a, b)| a * b).sum())
        };
        let mut scratch = p.clone();
        let (_, cache) = bn.forward_train(&mut scratch, &x, d).unwrap();
        let mut grads = Gradients::zeros_like(&p);
        let dx = bn.backward(&p, &cache, d, &up, &mut grads).unwrap();
        let numeric = finite_diff_grad(|q| loss(q, &x), &p, 1e-4).unwrap();
        assert!(gradients_relative_error(&grads, &numeric).unwrap() < 1e-4);
        let nx = finite_diff_input(|v| loss(&p, v), &x, 1e-4).unwrap();
        assert!(relative_error(&dx, &nx) < 1e-4);
    }
}
