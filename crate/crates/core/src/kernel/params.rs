use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::TensorBuf;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NASESPK1";
const BUFFER_PREFIX: &str = "buffers/";

/// Per-parameter optimizer slots. Adam uses both moments; Nesterov keeps its
/// velocity in `first`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slots {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Named trainable tensors, non-trainable buffers (batchnorm running
/// statistics) and optimizer state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub(crate) tensors: BTreeMap<String, TensorBuf>,
    buffers: BTreeMap<String, TensorBuf>,
    pub(crate) slots: BTreeMap<String, Slots>,
    pub(crate) step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: TensorBuf) {
        let name = name.into();
        debug_assert!(!name.starts_with(BUFFER_PREFIX));
        self.slots.remove(&name);
        self.tensors.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&TensorBuf> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut TensorBuf> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorBuf)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut TensorBuf)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn buffer(&self, name: &str) -> Option<&TensorBuf> {
        self.buffers.get(name)
    }

    pub fn set_buffer(&mut self, name: impl Into<String>, value: TensorBuf) {
        self.buffers.insert(name.into(), value);
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut TensorBuf> {
        self.buffers.get_mut(name)
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Same parameter names and shapes as `other`.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// Parameters and buffers in the checkpoint format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for (name, t) in &self.tensors {
            write_entry(&mut out, name, t.shape(), t.data());
        }
        for (name, t) in &self.buffers {
            write_entry(&mut out, &format!("{BUFFER_PREFIX}{name}"), t.shape(), t.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut set = ParamSet::new();
        for (name, tensor) in read_entries(bytes)? {
            match name.strip_prefix(BUFFER_PREFIX) {
                Some(buf) => {
                    set.buffers.insert(buf.to_string(), tensor);
                }
                None => {
                    set.tensors.insert(name, tensor);
                }
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Optimizer moments and step counter, in the checkpoint format.
    pub fn optimizer_state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        write_entry(&mut out, "step", &[1], &[self.step as f64]);
        for (name, slots) in &self.slots {
            let shape = self.tensors[name].shape();
            write_entry(&mut out, &format!("first/{name}"), shape, &slots.first);
            if !slots.second.is_empty() {
                write_entry(&mut out, &format!("second/{name}"), shape, &slots.second);
            }
        }
        out
    }

    pub fn restore_optimizer_state(&mut self, bytes: &[u8]) -> Result<()> {
        let mut step = None;
        let mut slots: BTreeMap<String, Slots> = BTreeMap::new();
        for (name, tensor) in read_entries(bytes)? {
            if name == "step" {
                step = Some(tensor.data()[0] as u64);
                continue;
            }
            let (kind, param) = name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("unexpected state entry `{name}`")))?;
            let expected = self
                .tensors
                .get(param)
                .ok_or_else(|| Error::Checkpoint(format!("state for unknown parameter `{param}`")))?;
            if expected.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!("state shape mismatch for `{param}`")));
            }
            let entry = slots.entry(param.to_string()).or_insert_with(|| Slots {
                first: Vec::new(),
                second: Vec::new(),
            });
            match kind {
                "first" => entry.first = tensor.into_data(),
                "second" => entry.second = tensor.into_data(),
                _ => return Err(Error::Checkpoint(format!("unexpected state entry `{name}`"))),
            }
        }
        self.step = step.ok_or_else(|| Error::Checkpoint("missing step counter".into()))?;
        self.slots = slots;
        Ok(())
    }
}

fn write_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u64).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u64).to_le_bytes());
    for &e in shape {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_entries(bytes: &[u8]) -> Result<Vec<(String, TensorBuf)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut entries = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u64()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u64()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible rank {rank} for `{name}`")));
        }
        let shape = (0..rank)
            .map(|_| cur.u64().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = cur.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = TensorBuf::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("entry `{name}`: {e}")))?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Gradient accumulator keyed like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    map: BTreeMap<String, TensorBuf>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Gradients {
            map: params
                .iter()
                .map(|(k, v)| (k.to_string(), TensorBuf::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&TensorBuf> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing gradient `{name}`")))
    }

    /// Mutable gradient storage for `name`.
    pub fn slot(&mut self, name: &str) -> Result<&mut [f64]> {
        self.map
            .get_mut(name)
            .map(|t| t.data_mut())
            .ok_or_else(|| Error::Shape(format!("missing gradient `{name}`")))
    }

    pub fn insert(&mut self, name: impl Into<String>, value: TensorBuf) {
        self.map.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorBuf)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    pub fn norm(&self) -> f64 {
        self.map.values().map(|t| t.sum_sq()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.map.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(|t| t.is_finite())
    }

    /// Errors unless every gradient matches a parameter of the same shape.
    pub fn check_against(&self, params: &ParamSet) -> Result<()> {
        for (name, g) in &self.map {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("gradient `{name}` is not finite")));
            }
        }
        Ok(())
    }
}
