//! The discrete architecture space: a chain of layers, each with one operator
//! and a set of skip connections from earlier layers.

mod enumerate;
mod origin;

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use enumerate::{enumerate_space, space_size, DEFAULT_ENUMERATION_CAP};
pub use origin::{discretize, encode_origin, OriginVector};

pub const NUM_OPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "sep_conv_3x3")]
    SepConv3x3,
    #[serde(rename = "sep_conv_5x5")]
    SepConv5x5,
    #[serde(rename = "avg_pool_3x3")]
    AvgPool3x3,
    #[serde(rename = "max_pool_3x3")]
    MaxPool3x3,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; NUM_OPS] = [
        OperatorKind::Identity,
        OperatorKind::SepConv3x3,
        OperatorKind::SepConv5x5,
        OperatorKind::AvgPool3x3,
        OperatorKind::MaxPool3x3,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Identity => "identity",
            OperatorKind::SepConv3x3 => "sep_conv_3x3",
            OperatorKind::SepConv5x5 => "sep_conv_5x5",
            OperatorKind::AvgPool3x3 => "avg_pool_3x3",
            OperatorKind::MaxPool3x3 => "max_pool_3x3",
        }
    }

    /// Spatial kernel extent; identity has none.
    pub fn kernel_size(self) -> Option<usize> {
        match self {
            OperatorKind::Identity => None,
            OperatorKind::SepConv5x5 => Some(5),
            _ => Some(3),
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub layer_count: usize,
    pub skips_enabled: bool,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            layer_count: 15,
            skips_enabled: true,
        }
    }
}

impl SpaceConfig {
    pub fn new(layer_count: usize, skips_enabled: bool) -> Result<Self> {
        let cfg = SpaceConfig {
            layer_count,
            skips_enabled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::Config("layer_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of one per-layer token: five operator slots plus `L - 1` skip slots.
    pub fn token_width(&self) -> usize {
        NUM_OPS + self.layer_count - 1
    }

    /// Dimension `m` of the origin vector.
    pub fn origin_dim(&self) -> usize {
        self.layer_count * self.token_width()
    }

    /// Number of (layer, source) skip positions that can ever be set.
    pub fn feasible_skips(&self) -> usize {
        if self.skips_enabled {
            self.layer_count * (self.layer_count - 1) / 2
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerSpec {
    pub op: OperatorKind,
    pub skips: BTreeSet<usize>,
}

impl LayerSpec {
    pub fn new(op: OperatorKind) -> Self {
        LayerSpec {
            op,
            skips: BTreeSet::new(),
        }
    }

    pub fn with_skips(op: OperatorKind, skips: impl IntoIterator<Item = usize>) -> Self {
        LayerSpec {
            op,
            skips: skips.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Architecture { layers }
    }

    /// Chain of the given operators with no skip connections.
    pub fn chain(ops: &[OperatorKind]) -> Self {
        Architecture {
            layers: ops.iter().map(|&op| LayerSpec::new(op)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn ops(&self) -> impl Iterator<Item = OperatorKind> + '_ {
        self.layers.iter().map(|l| l.op)
    }

    pub fn validate(&self, cfg: &SpaceConfig) -> Result<()> {
        if self.layers.len() != cfg.layer_count {
            return Err(Error::InvalidArchitecture(format!(
                "expected {} layers, found {}",
                cfg.layer_count,
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if !cfg.skips_enabled && !layer.skips.is_empty() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} has skips but skips are disabled"
                )));
            }
            if let Some(&s) = layer.skips.iter().find(|&&s| s >= i) {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} has skip from layer {s}, which is not earlier"
                )));
            }
        }
        Ok(())
    }

    /// Structural validity without a space config (at least one layer, skips point backwards).
    pub fn validate_structure(&self) -> Result<()> {
        let cfg = SpaceConfig {
            layer_count: self.layers.len().max(1),
            skips_enabled: true,
        };
        self.validate(&cfg)
    }

    /// Canonical JSON: `{"layers":[{"op":"sep_conv_3x3","skips":[0,2]},...]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("architecture serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arch: Architecture = serde_json::from_str(text)?;
        arch.validate_structure()?;
        Ok(arch)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{}", layer.op)?;
            if !layer.skips.is_empty() {
                let skips: Vec<String> = layer.skips.iter().map(|s| s.to_string()).collect();
                write!(f, "[{}]", skips.join(","))?;
            }
        }
        Ok(())
    }
}

/// Uniform operator per layer; each feasible skip bit set with probability 1/2.
pub fn random_architecture(cfg: &SpaceConfig, seed: u64) -> Architecture {
    let mut rng = rng::seeded(seed);
    let layers = (0..cfg.layer_count)
        .map(|i| {
            let op = OperatorKind::ALL[rng.gen_range(0..NUM_OPS)];
            let skips = if cfg.skips_enabled {
                (0..i).filter(|_| rng.gen_bool(0.5)).collect()
            } else {
                BTreeSet::new()
            };
            LayerSpec { op, skips }
        })
        .collect();
    Architecture { layers }
}
