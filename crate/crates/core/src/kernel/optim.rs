use super::params::{Gradients, ParamSet, Slots};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-5)
    }
}

/// One bias-corrected Adam step. Gradients are validated in full before any
/// parameter is touched, so a rejected step leaves `params` unchanged.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    grads.check_against(params)?;
    let t = params.step + 1;
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, g) in grads.iter() {
        let n = g.len();
        let slots = params.slots.entry(name.to_string()).or_insert_with(|| Slots {
            first: vec![0.0; n],
            second: vec![0.0; n],
        });
        if slots.second.len() != n {
            slots.second = vec![0.0; n];
        }
        let p = params
            .tensors
            .get_mut(name)
            .expect("checked against params above")
            .data_mut();
        for i in 0..n {
            let gi = g.data()[i];
            let m = cfg.beta1 * slots.first[i] + (1.0 - cfg.beta1) * gi;
            let v = cfg.beta2 * slots.second[i] + (1.0 - cfg.beta2) * gi * gi;
            slots.first[i] = m;
            slots.second[i] = v;
            p[i] -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
    params.step = t;
    Ok(())
}

/// SGD with Nesterov momentum and L2 weight decay:
/// `v = mu v + (g + wd p)`, `p -= lr (g + wd p + mu v)`.
pub fn nesterov_step(
    params: &mut ParamSet,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    grads.check_against(params)?;
    for (name, g) in grads.iter() {
        let n = g.len();
        let slots = params.slots.entry(name.to_string()).or_insert_with(|| Slots {
            first: vec![0.0; n],
            second: Vec::new(),
        });
        let p = params
            .tensors
            .get_mut(name)
            .expect("checked against params above")
            .data_mut();
        for i in 0..n {
            let d = g.data()[i] + weight_decay * p[i];
            let v = momentum * slots.first[i] + d;
            slots.first[i] = v;
            p[i] -= lr * (d + momentum * v);
        }
    }
    params.step += 1;
    Ok(())
}
