//! Elementwise activations, softmax and the two losses used in training.

use super::tensor::TensorBuf;
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| relu(v)).collect()
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

/// Gradient through sigmoid given its output.
pub fn sigmoid_backward(output: &[f64], grad_out: &[f64]) -> Vec<f64> {
    output
        .iter()
        .zip(grad_out)
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect()
}

/// Row-wise softmax over the last extent.
pub fn softmax(x: &TensorBuf) -> TensorBuf {
    let width = *x.shape().last().expect("tensor has rank >= 1");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(width) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// Vector-Jacobian product of the row softmax given its output.
pub fn softmax_backward(output: &TensorBuf, grad_out: &TensorBuf) -> Result<TensorBuf> {
    if output.shape() != grad_out.shape() {
        return Err(Error::Shape("softmax gradient shape mismatch".into()));
    }
    let width = *output.shape().last().unwrap();
    let mut grad = TensorBuf::zeros(output.shape());
    for ((y, g), dx) in output
        .data()
        .chunks(width)
        .zip(grad_out.data().chunks(width))
        .zip(grad.data_mut().chunks_mut(width))
    {
        let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..width {
            dx[i] = y[i] * (g[i] - dot);
        }
    }
    Ok(grad)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &TensorBuf, target: &TensorBuf) -> Result<(f64, TensorBuf)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (loss, grad) = mse_slices(pred.data(), target.data());
    Ok((loss, TensorBuf::new(pred.shape().to_vec(), grad)?))
}

pub(crate) fn mse_slices(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}

/// Mean cross-entropy of row-wise softmax over `logits` (`batch x classes`)
/// and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &TensorBuf, labels: &[usize]) -> Result<(f64, TensorBuf)> {
    let [batch, classes] = logits.dims::<2>()?;
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!("label {l} out of range for {classes} classes")));
    }
    let probs = softmax(logits);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &mut grad.data_mut()[b * classes..(b + 1) * classes];
        loss -= probs.data()[b * classes + label].max(1e-300).ln();
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v /= batch as f64);
    }
    Ok((loss / batch as f64, grad))
}
