//! Central finite differences, the reference every analytic backward pass is
//! tested against.

use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-4;

/// `(f(p + eps e_i) - f(p - eps e_i)) / 2 eps` for every trainable scalar.
pub fn finite_diff_grad<F>(mut f: F, params: &ParamSet, eps: f64) -> Result<Gradients>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config("finite difference eps must be positive".into()));
    }
    let mut probe = params.clone();
    let mut grads = Gradients::zeros_like(params);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name)?.len();
        for i in 0..len {
            let orig = params.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + eps;
            let plus = f(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - eps;
            let minus = f(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("objective not finite near `{name}`[{i}]")));
            }
            grads.slot(&name)?[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Central differences of a scalar function of a flat input.
pub fn finite_diff_input<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config("finite difference eps must be positive".into()));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe)?;
        probe[i] = x[i] - eps;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("objective not finite near input {i}")));
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// Largest elementwise `|analytic - numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// [`relative_error`] over every entry of two gradient maps.
pub fn gradients_relative_error(analytic: &Gradients, numeric: &Gradients) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (name, a) in analytic.iter() {
        let n = numeric.get(name)?;
        worst = worst.max(relative_error(a.data(), n.data()));
    }
    Ok(worst)
}
