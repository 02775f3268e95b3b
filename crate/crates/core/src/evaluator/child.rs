use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::activation::{relu_backward, relu_forward};
use crate::kernel::batchnorm::BnCache;
use crate::kernel::conv::{
    avg_pool_backward, avg_pool_forward, depthwise_backward, depthwise_forward, max_pool_backward,
    max_pool_forward, pointwise_backward, pointwise_forward, subsample_backward, subsample_forward, Dims4,
};
use crate::kernel::init::he_init_with;
use crate::kernel::{BatchNorm, Dense, Gradients, ParamSet};
use crate::rng;
use crate::space::{Architecture, OperatorKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChildConfig {
    pub filters: usize,
    pub classes: usize,
    pub in_channels: usize,
    /// Layers whose adapter halves the resolution; `None` means `L/3` and `2L/3`.
    pub reductions: Option<Vec<usize>>,
    /// Double the filter count at every reduction.
    pub double_filters: bool,
}

impl Default for ChildConfig {
    fn default() -> Self {
        ChildConfig {
            filters: 40,
            classes: 10,
            in_channels: 3,
            reductions: None,
            double_filters: true,
        }
    }
}

impl ChildConfig {
    pub fn default_reductions(layers: usize) -> Vec<usize> {
        let mut r: Vec<usize> = [layers / 3, 2 * layers / 3]
            .into_iter()
            .filter(|&i| i > 0 && i < layers)
            .collect();
        r.dedup();
        r
    }

    pub fn resolve_reductions(&self, layers: usize) -> Result<Vec<usize>> {
        let mut r = match &self.reductions {
            Some(r) => r.clone(),
            None => return Ok(Self::default_reductions(layers)),
        };
        r.sort_unstable();
        r.dedup();
        if let Some(&bad) = r.iter().find(|&&i| i == 0 || i >= layers) {
            return Err(Error::Config(format!(
                "reduction layer {bad} must lie in 1..{layers} (layer 0 has no adapter)"
            )));
        }
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.classes == 0 || self.in_channels == 0 {
            return Err(Error::Config("filters, classes and input channels must be positive".into()));
        }
        Ok(())
    }
}

/// Static shape plan of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub index: usize,
    pub op: OperatorKind,
    /// Input layers, the sequential predecessor first; empty for layer 0.
    pub sources: Vec<usize>,
    /// Number of reductions at or before this layer.
    pub level: usize,
    /// Channels entering the operator (after the adapter, if any).
    pub op_channels: usize,
    pub out_channels: usize,
    /// Concatenated channels entering the adapter.
    pub adapter_in: Option<usize>,
}

struct Part {
    source: usize,
    dims: Dims4,
    factor: usize,
}

struct AdapterCache {
    parts: Vec<Part>,
    concat: Vec<f64>,
    cdims: Dims4,
    relu: Vec<f64>,
    bn: BnCache,
}

enum OpCache {
    Plain,
    Max(Vec<usize>),
    Sep {
        relu: Vec<f64>,
        mid: Vec<f64>,
        bn: BnCache,
    },
}

struct LayerCache {
    adapter: Option<AdapterCache>,
    op_in: Vec<f64>,
    op_dims: Dims4,
    op: OpCache,
}

/// Activations kept by a training-mode forward pass for [`ChildNet::backward`].
pub struct ChildCache {
    layers: Vec<LayerCache>,
    out_dims: Vec<Dims4>,
    pooled: Vec<f64>,
    batch: usize,
}

/// A chain of operator blocks built from an architecture, each block ordered
/// ReLU, convolution, batch normalization, ending in global average pooling
/// and a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildNet {
    pub arch: Architecture,
    pub config: ChildConfig,
    pub plans: Vec<LayerPlan>,
    pub params: ParamSet,
    head: Dense,
}

fn name(i: usize, part: &str) -> String {
    format!("l{i:02}.{part}")
}

fn sep_kernel(op: OperatorKind) -> Option<usize> {
    match op {
        OperatorKind::SepConv3x3 | OperatorKind::SepConv5x5 => op.kernel_size(),
        _ => None,
    }
}

impl ChildNet {
    pub fn build(arch: &Architecture, config: &ChildConfig, seed: u64) -> Result<Self> {
        arch.validate_structure()?;
        config.validate()?;
        let l = arch.len();
        let reductions = config.resolve_reductions(l)?;
        let mut plans: Vec<LayerPlan> = Vec::with_capacity(l);
        for (i, layer) in arch.layers.iter().enumerate() {
            let level = reductions.iter().filter(|&&r| r <= i).count();
            let width = if config.double_filters {
                config.filters << level
            } else {
                config.filters
            };
            let (sources, adapter_in, op_channels) = if i == 0 {
                (Vec::new(), None, config.in_channels)
            } else {
                let mut sources = vec![i - 1];
                sources.extend(layer.skips.iter().copied());
                let cin = sources.iter().map(|&s| plans[s].out_channels).sum();
                (sources, Some(cin), width)
            };
            let out_channels = if sep_kernel(layer.op).is_some() { width } else { op_channels };
            plans.push(LayerPlan {
                index: i,
                op: layer.op,
                sources,
                level,
                op_channels,
                out_channels,
                adapter_in,
            });
        }

        let mut r = rng::seeded(seed);
        let mut params = ParamSet::new();
        for p in &plans {
            let width = if config.double_filters { config.filters << p.level } else { config.filters };
            if let Some(cin) = p.adapter_in {
                params.insert(name(p.index, "adapt.w"), he_init_with(&[width, cin], cin, &mut r)?);
                BatchNorm::new(name(p.index, "adapt.bn"), width).init(&mut params);
            }
            if let Some(k) = sep_kernel(p.op) {
                let c = p.op_channels;
                params.insert(name(p.index, "op.dw"), he_init_with(&[c, k, k], k * k, &mut r)?);
                params.insert(name(p.index, "op.pw"), he_init_with(&[width, c], c, &mut r)?);
                BatchNorm::new(name(p.index, "op.bn"), width).init(&mut params);
            }
        }
        let head = Dense::new("head", plans[l - 1].out_channels, config.classes);
        head.init(&mut params, &mut r)?;
        Ok(ChildNet {
            arch: arch.clone(),
            config: config.clone(),
            plans,
            params,
            head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.num_values()
    }

    /// Logits (`batch x classes`) for an NCHW batch. Training mode uses batch
    /// statistics, updates the running statistics and returns a cache.
    pub fn forward(&mut self, x: &[f64], dims: Dims4, training: bool) -> Result<(Vec<f64>, Option<ChildCache>)> {
        if dims.c != self.config.in_channels || x.len() != dims.len() {
            return Err(Error::Shape(format!(
                "child expects {} input channels, got {:?} with {} values",
                self.config.in_channels,
                dims,
                x.len()
            )));
        }
        let ChildNet {
            plans, params, head, ..
        } = self;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(plans.len());
        let mut out_dims: Vec<Dims4> = Vec::with_capacity(plans.len());
        let mut caches = Vec::new();
        for p in plans.iter() {
            let (op_in, op_dims, adapter) = match p.adapter_in {
                None => (x.to_vec(), dims, None),
                Some(cin) => {
                    let seq = out_dims[p.index - 1];
                    let factor = 1 << (p.level - plans[p.index - 1].level);
                    let cdims = Dims4::new(dims.n, cin, (seq.h - 1) / factor + 1, (seq.w - 1) / factor + 1);
                    let mut parts = Vec::with_capacity(p.sources.len());
                    let mut subs = Vec::with_capacity(p.sources.len());
                    for &s in &p.sources {
                        let factor = 1 << (p.level - plans[s].level);
                        let (y, yd) = subsample_forward(&outputs[s], out_dims[s], factor);
                        if (yd.h, yd.w) != (cdims.h, cdims.w) {
                            return Err(Error::Shape(format!("skip {s} -> {} resolution mismatch", p.index)));
                        }
                        parts.push(Part {
                            source: s,
                            dims: out_dims[s],
                            factor,
                        });
                        subs.push((y, yd));
                    }
                    let mut concat = Vec::with_capacity(cdims.len());
                    for n in 0..dims.n {
                        for (y, yd) in &subs {
                            let block = yd.c * yd.plane();
                            concat.extend_from_slice(&y[n * block..(n + 1) * block]);
                        }
                    }
                    let relu = relu_forward(&concat);
                    let w_name = name(p.index, "adapt.w");
                    let width = params.get(&w_name)?.shape()[0];
                    let (z, zd) = pointwise_forward(&relu, cdims, params.get(&w_name)?.data(), width);
                    let bn = BatchNorm::new(name(p.index, "adapt.bn"), width);
                    let (a, bn_cache) = if training {
                        let (a, c) = bn.forward_train(params, &z, zd)?;
                        (a, Some(c))
                    } else {
                        (bn.forward_eval(params, &z, zd)?, None)
                    };
                    if a.len() != zd.len() || zd.c != p.op_channels {
                        return Err(Error::Shape(format!("adapter of layer {} produced {} channels", p.index, zd.c)));
                    }
                    let cache = bn_cache.map(|bn| AdapterCache {
                        parts,
                        concat,
                        cdims,
                        relu,
                        bn,
                    });
                    (a, zd, cache)
                }
            };
            let (y, yd, op_cache) = match p.op {
                OperatorKind::Identity => (op_in.clone(), op_dims, OpCache::Plain),
                OperatorKind::AvgPool3x3 => {
                    let (y, yd) = avg_pool_forward(&op_in, op_dims, 1);
                    (y, yd, OpCache::Plain)
                }
                OperatorKind::MaxPool3x3 => {
                    let (y, arg, yd) = max_pool_forward(&op_in, op_dims, 1);
                    (y, yd, OpCache::Max(arg))
                }
                OperatorKind::SepConv3x3 | OperatorKind::SepConv5x5 => {
                    let k = p.op.kernel_size().expect("separable conv has a kernel");
                    let relu = relu_forward(&op_in);
                    let (mid, md) = depthwise_forward(&relu, op_dims, params.get(&name(p.index, "op.dw"))?.data(), k, 1);
                    let (z, zd) = pointwise_forward(&mid, md, params.get(&name(p.index, "op.pw"))?.data(), p.out_channels);
                    let bn = BatchNorm::new(name(p.index, "op.bn"), p.out_channels);
                    if training {
                        let (y, c) = bn.forward_train(params, &z, zd)?;
                        (y, zd, OpCache::Sep { relu, mid, bn: c })
                    } else {
                        (bn.forward_eval(params, &z, zd)?, zd, OpCache::Plain)
                    }
                }
            };
            if yd.c != p.out_channels {
                return Err(Error::Shape(format!("layer {} produced {} channels", p.index, yd.c)));
            }
            if training {
                caches.push(LayerCache {
                    adapter,
                    op_in,
                    op_dims,
                    op: op_cache,
                });
            }
            outputs.push(y);
            out_dims.push(yd);
        }
        let last = *out_dims.last().expect("at least one layer");
        let plane = last.plane() as f64;
        let pooled: Vec<f64> = outputs
            .last()
            .expect("at least one layer")
            .chunks(last.plane())
            .map(|c| c.iter().sum::<f64>() / plane)
            .collect();
        let logits = head.forward_slice(params, &pooled, dims.n)?;
        let cache = training.then_some(ChildCache {
            layers: caches,
            out_dims,
            pooled,
            batch: dims.n,
        });
        Ok((logits, cache))
    }

    /// Gradients of the loss with respect to every parameter, given `dL/dlogits`.
    pub fn backward(&self, cache: &ChildCache, d_logits: &[f64]) -> Result<Gradients> {
        let params = &self.params;
        let mut grads = Gradients::zeros_like(params);
        let d_pooled = self.head.backward_slice(params, &cache.pooled, cache.batch, d_logits, &mut grads)?;
        let l = self.plans.len();
        let mut d_out: Vec<Option<Vec<f64>>> = vec![None; l];
        let last = cache.out_dims[l - 1];
        let plane = last.plane();
        d_out[l - 1] = Some(d_pooled.iter().flat_map(|&g| std::iter::repeat_n(g / plane as f64, plane)).collect());

        for (p, lc) in self.plans.iter().zip(&cache.layers).rev() {
            let dy = d_out[p.index]
                .take()
                .unwrap_or_else(|| vec![0.0; cache.out_dims[p.index].len()]);
            let d_in = match &lc.op {
                OpCache::Plain => match p.op {
                    OperatorKind::Identity => dy,
                    OperatorKind::AvgPool3x3 => avg_pool_backward(lc.op_dims, 1, &dy),
                    _ => return Err(Error::Shape("cache does not match operator".into())),
                },
                OpCache::Max(arg) => max_pool_backward(lc.op_dims, arg, &dy),
                OpCache::Sep { relu, mid, bn } => {
                    let k = p.op.kernel_size().expect("separable conv has a kernel");
                    let zd = cache.out_dims[p.index];
                    let dz = BatchNorm::new(name(p.index, "op.bn"), p.out_channels).backward(params, bn, zd, &dy, &mut grads)?;
                    let md = lc.op_dims;
                    let pw = name(p.index, "op.pw");
                    let dmid = pointwise_backward(mid, md, params.get(&pw)?.data(), p.out_channels, &dz, grads.slot(&pw)?);
                    let dw = name(p.index, "op.dw");
                    let drelu = depthwise_backward(relu, lc.op_dims, params.get(&dw)?.data(), k, 1, &dmid, grads.slot(&dw)?);
                    relu_backward(&lc.op_in, &drelu)
                }
            };
            if let Some(ad) = &lc.adapter {
                let width = p.op_channels;
                let dz = BatchNorm::new(name(p.index, "adapt.bn"), width).backward(params, &ad.bn, lc.op_dims, &d_in, &mut grads)?;
                let w = name(p.index, "adapt.w");
                let drelu = pointwise_backward(&ad.relu, ad.cdims, params.get(&w)?.data(), width, &dz, grads.slot(&w)?);
                let dconcat = relu_backward(&ad.concat, &drelu);
                let per_sample = ad.cdims.c * ad.cdims.plane();
                let mut offset = 0;
                for part in &ad.parts {
                    let block = part.dims.c * ad.cdims.plane();
                    let mut dpart = Vec::with_capacity(block * cache.batch);
                    for n in 0..cache.batch {
                        dpart.extend_from_slice(&dconcat[n * per_sample + offset..][..block]);
                    }
                    offset += block;
                    let dsrc = subsample_backward(part.dims, part.factor, &dpart);
                    match &mut d_out[part.source] {
                        Some(acc) => acc.iter_mut().zip(&dsrc).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(dsrc),
                    }
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::kernel::gradcheck::{finite_diff_grad, gradients_relative_error};
    use crate::kernel::softmax_cross_entropy;
    use crate::kernel::TensorBuf;
    use crate::space::{random_architecture, LayerSpec, SpaceConfig};
    use OperatorKind::*;

    /// Independent closed form: adapters `cin*w + 2w`, separable convolutions
    /// `c*k*k + c*w + 2w`, classifier `c_last*classes + classes`.
    fn hand_count(arch: &Architecture, f: usize, classes: usize, reductions: &[usize]) -> usize {
        let mut out = Vec::new();
        let mut total = 0;
        for (i, layer) in arch.layers.iter().enumerate() {
            let level = reductions.iter().filter(|&&r| r <= i).count();
            let w = f << level;
            let c = if i == 0 {
                3
            } else {
                let cin: usize = out[i - 1] + layer.skips.iter().map(|&s| out[s]).sum::<usize>();
                total += cin * w + 2 * w;
                w
            };
            let o = match layer.op {
                SepConv3x3 => {
                    total += c * 9 + c * w + 2 * w;
                    w
                }
                SepConv5x5 => {
                    total += c * 25 + c * w + 2 * w;
                    w
                }
                _ => c,
            };
            out.push(o);
        }
        total + out[out.len() - 1] * classes + classes
    }

    fn small_cfg(f: usize) -> ChildConfig {
        ChildConfig {
            filters: f,
            ..Default::default()
        }
    }

    #[test]
    fn default_reductions() {
        assert_eq!(ChildConfig::default_reductions(15), vec![5, 10]);
        assert_eq!(ChildConfig::default_reductions(4), vec![1, 2]);
        assert_eq!(ChildConfig::default_reductions(2), vec![1]);
        assert!(ChildConfig::default_reductions(1).is_empty());
        let bad = ChildConfig {
            reductions: Some(vec![0]),
            ..Default::default()
        };
        assert!(bad.resolve_reductions(4).is_err());
    }

    #[test]
    fn identity_chain_counts_only_adapters_and_head() {
        let arch = Architecture::chain(&[Identity; 4]);
        let net = ChildNet::build(&arch, &small_cfg(8), 0).unwrap();
        // reductions at 1 and 2; adapters 3->16, 16->32, 32->32; head 32->10
        let expected = (3 * 16 + 32) + (16 * 32 + 64) + (32 * 32 + 64) + 32 * 10 + 10;
        assert_eq!(net.param_count(), expected);
    }

    #[test]
    fn param_count_matches_hand_formula() {
        let archs = [
            Architecture::chain(&[SepConv3x3, MaxPool3x3, SepConv5x5, AvgPool3x3]),
            Architecture::new(vec![
                LayerSpec::new(AvgPool3x3),
                LayerSpec::new(SepConv5x5),
                LayerSpec::with_skips(Identity, [0]),
                LayerSpec::with_skips(SepConv3x3, [0, 1]),
            ]),
            Architecture::new(vec![
                LayerSpec::new(SepConv5x5),
                LayerSpec::new(SepConv3x3),
                LayerSpec::with_skips(MaxPool3x3, [0, 1]),
                LayerSpec::new(Identity),
                LayerSpec::with_skips(SepConv5x5, [2]),
                LayerSpec::with_skips(AvgPool3x3, [0, 3, 4]),
            ]),
        ];
        for arch in &archs {
            let red = ChildConfig::default_reductions(arch.len());
            let net = ChildNet::build(arch, &small_cfg(6), 1).unwrap();
            assert_eq!(net.param_count(), hand_count(arch, 6, 10, &red), "{arch}");
        }
    }

    #[test]
    fn every_sampled_architecture_builds_and_runs() {
        let space = SpaceConfig::new(5, true).unwrap();
        let mut r = rng::seeded(2);
        let d = Dims4::new(2, 3, 8, 8);
        let x: Vec<f64> = (0..d.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        for seed in 0..30 {
            let arch = random_architecture(&space, seed);
            let mut net = ChildNet::build(&arch, &small_cfg(4), seed).unwrap();
            let (logits, cache) = net.forward(&x, d, true).unwrap();
            assert_eq!(logits.len(), 2 * 10);
            assert!(cache.is_some());
            for (p, od) in net.plans.iter().zip(&cache.unwrap().out_dims) {
                assert_eq!(od.c, p.out_channels);
            }
            let (eval, none) = net.forward(&x, d, false).unwrap();
            assert_eq!(eval.len(), 20);
            assert!(none.is_none());
        }
    }

    #[test]
    fn full_scale_shape_contract() {
        let space = SpaceConfig::default();
        let arch = random_architecture(&space, 11);
        let mut net = ChildNet::build(&arch, &ChildConfig::default(), 0).unwrap();
        let d = Dims4::new(1, 3, 32, 32);
        let (logits, _) = net.forward(&vec![0.5; d.len()], d, true).unwrap();
        assert_eq!(logits.len(), 10);
    }

    #[test]
    fn eval_before_training_lacks_statistics() {
        let arch = Architecture::chain(&[SepConv3x3, Identity]);
        let mut net = ChildNet::build(&arch, &small_cfg(4), 0).unwrap();
        let d = Dims4::new(1, 3, 4, 4);
        assert!(matches!(net.forward(&vec![0.1; d.len()], d, false), Err(Error::MissingStats(_))));
    }

    #[test]
    fn rejects_wrong_input_channels() {
        let arch = Architecture::chain(&[Identity, Identity]);
        let mut net = ChildNet::build(&arch, &small_cfg(4), 0).unwrap();
        let d = Dims4::new(1, 1, 4, 4);
        assert!(matches!(net.forward(&[0.0; 16], d, true), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let archs = [
            Architecture::new(vec![
                LayerSpec::new(SepConv3x3),
                LayerSpec::new(MaxPool3x3),
                LayerSpec::with_skips(SepConv5x5, [0]),
                LayerSpec::with_skips(AvgPool3x3, [0, 1, 2]),
            ]),
            Architecture::new(vec![
                LayerSpec::new(Identity),
                LayerSpec::new(AvgPool3x3),
                LayerSpec::with_skips(Identity, [0]),
            ]),
        ];
        for (t, arch) in archs.iter().enumerate() {
            let cfg = ChildConfig {
                filters: 2,
                classes: 3,
                ..Default::default()
            };
            let mut net = ChildNet::build(arch, &cfg, 5 + t as u64).unwrap();
            let d = Dims4::new(3, 3, 5, 5);
            let mut r = rng::seeded(6);
            let x: Vec<f64> = (0..d.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let labels = vec![0, 2, 1];
            let (logits, cache) = net.forward(&x, d, true).unwrap();
            let (_, dl) = softmax_cross_entropy(&TensorBuf::new(vec![3, 3], logits).unwrap(), &labels).unwrap();
            let analytic = net.backward(&cache.unwrap(), dl.data()).unwrap();
            let probe = net.clone();
            let numeric = finite_diff_grad(
                |p| {
                    let mut n = probe.clone();
                    n.params = p.clone();
                    let (lg, _) = n.forward(&x, d, true)?;
                    Ok(softmax_cross_entropy(&TensorBuf::new(vec![3, 3], lg)?, &labels)?.0)
                },
                &net.params,
                1e-5,
            )
            .unwrap();
            let err = gradients_relative_error(&analytic, &numeric).unwrap();
            assert!(err < 1e-4, "arch {t}: {err}");
        }
    }
}
