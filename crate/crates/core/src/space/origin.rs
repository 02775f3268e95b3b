use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Architecture, LayerSpec, OperatorKind, SpaceConfig, NUM_OPS};
use crate::error::{Error, Result};

/// Flattened continuous form of an architecture: `L` tokens of width
/// `5 + (L - 1)`, each `[op one-hot | skip bits]`. Skip slot `s` of token `i`
/// is only meaningful for `s < i`; the rest stay at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginVector {
    values: Vec<f64>,
}

impl OriginVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidVector(format!(
                "entry {v} outside the unit interval"
            )));
        }
        Ok(OriginVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn token(&self, cfg: &SpaceConfig, i: usize) -> &[f64] {
        let w = cfg.token_width();
        &self.values[i * w..(i + 1) * w]
    }
}

pub fn encode_origin(arch: &Architecture, cfg: &SpaceConfig) -> Result<OriginVector> {
    arch.validate(cfg)?;
    let w = cfg.token_width();
    let mut values = vec![0.0; cfg.origin_dim()];
    for (i, layer) in arch.layers.iter().enumerate() {
        let token = &mut values[i * w..(i + 1) * w];
        token[layer.op.code()] = 1.0;
        for &s in &layer.skips {
            token[NUM_OPS + s] = 1.0;
        }
    }
    Ok(OriginVector { values })
}

/// Snaps a continuous origin vector to the nearest valid architecture: argmax
/// over operator slots (ties go to the lowest code), skip `s` kept when its
/// slot exceeds 0.5 and `s` precedes the layer.
pub fn discretize(v: &OriginVector, cfg: &SpaceConfig) -> Result<Architecture> {
    if v.len() != cfg.origin_dim() {
        return Err(Error::InvalidVector(format!(
            "expected dimension {}, found {}",
            cfg.origin_dim(),
            v.len()
        )));
    }
    let layers = (0..cfg.layer_count)
        .map(|i| {
            let token = v.token(cfg, i);
            let mut best = 0;
            for k in 1..NUM_OPS {
                if token[k] > token[best] {
                    best = k;
                }
            }
            let skips: BTreeSet<usize> = if cfg.skips_enabled {
                (0..i).filter(|&s| token[NUM_OPS + s] > 0.5).collect()
            } else {
                BTreeSet::new()
            };
            LayerSpec {
                op: OperatorKind::ALL[best],
                skips,
            }
        })
        .collect();
    Ok(Architecture { layers })
}
