use super::gemm::gemm;
use super::init::uniform_init;
use super::params::{Gradients, ParamSet};
use super::tensor::TensorBuf;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Affine layer `y = x W^T + b` with `W` stored as `{prefix}.w` (`output x input`)
/// and `b` as `{prefix}.b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub prefix: String,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(prefix: impl Into<String>, input: usize, output: usize) -> Self {
        Dense {
            prefix: prefix.into(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    /// Uniform `(-1/sqrt(input), 1/sqrt(input))` weights and biases.
    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / (self.input as f64).sqrt();
        params.insert(self.weight_name(), uniform_init(&[self.output, self.input], bound, rng)?);
        params.insert(self.bias_name(), uniform_init(&[self.output], bound, rng)?);
        Ok(())
    }

    fn weights<'a>(&self, params: &'a ParamSet) -> Result<(&'a [f64], &'a [f64])> {
        let w = params.get(&self.weight_name())?;
        let b = params.get(&self.bias_name())?;
        if w.shape() != [self.output, self.input] || b.shape() != [self.output] {
            return Err(Error::Shape(format!(
                "dense `{}` expects {}x{} weights",
                self.prefix, self.output, self.input
            )));
        }
        Ok((w.data(), b.data()))
    }

    /// Forward over a row-major `batch x input` slice.
    pub fn forward_slice(&self, params: &ParamSet, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.input {
            return Err(Error::Shape(format!(
                "dense `{}`: input of length {} is not {batch}x{}",
                self.prefix,
                x.len(),
                self.input
            )));
        }
        let (w, b) = self.weights(params)?;
        let mut y: Vec<f64> = b.iter().cycle().take(batch * self.output).copied().collect();
        gemm(batch, self.input, self.output, 1.0, x, false, w, true, 1.0, &mut y);
        Ok(y)
    }

    /// Accumulates weight gradients into `grads` and returns `dL/dx`.
    pub fn backward_slice(
        &self,
        params: &ParamSet,
        x: &[f64],
        batch: usize,
        grad_out: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if grad_out.len() != batch * self.output || x.len() != batch * self.input {
            return Err(Error::Shape(format!("dense `{}` backward shape mismatch", self.prefix)));
        }
        let (w, _) = self.weights(params)?;
        gemm(
            self.output,
            batch,
            self.input,
            1.0,
            grad_out,
            true,
            x,
            false,
            1.0,
            grads.slot(&self.weight_name())?,
        );
        let db = grads.slot(&self.bias_name())?;
        for row in grad_out.chunks(self.output) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let mut dx = vec![0.0; batch * self.input];
        gemm(batch, self.output, self.input, 1.0, grad_out, false, w, false, 0.0, &mut dx);
        Ok(dx)
    }

    /// Forward over a `batch x input` tensor.
    pub fn forward(&self, params: &ParamSet, x: &TensorBuf) -> Result<TensorBuf> {
        let [batch, _] = x.dims::<2>()?;
        let y = self.forward_slice(params, x.data(), batch)?;
        TensorBuf::new(vec![batch, self.output], y)
    }

    /// Returns the parameter gradients and `dL/dx` for upstream gradient `grad_out`.
    pub fn backward(
        &self,
        params: &ParamSet,
        x: &TensorBuf,
        grad_out: &TensorBuf,
    ) -> Result<(Gradients, TensorBuf)> {
        let [batch, _] = x.dims::<2>()?;
        let mut grads = Gradients::zeros_like(params);
        let dx = self.backward_slice(params, x.data(), batch, grad_out.data(), &mut grads)?;
        Ok((grads, TensorBuf::new(vec![batch, self.input], dx)?))
    }
}
