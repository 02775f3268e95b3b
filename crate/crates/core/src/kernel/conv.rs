//! Spatial operators on NCHW tensors: depthwise and pointwise convolution,
//! 3x3 pooling and strided subsampling, each with a backward pass.
//!
//! All windows use "same" padding (`k / 2` on each side), so at stride 1 the
//! spatial extents are preserved and at stride 2 they halve (rounding up).

use super::gemm::gemm;
use super::params::{Gradients, ParamSet};
use super::tensor::TensorBuf;
use crate::error::{Error, Result};
use crate::space::OperatorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims4 { n, c, h, w }
    }

    pub fn of(t: &TensorBuf) -> Result<Self> {
        let [n, c, h, w] = t.dims::<4>()?;
        Ok(Dims4 { n, c, h, w })
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n, self.c, self.h, self.w]
    }

    pub fn with_channels(&self, c: usize) -> Self {
        Dims4 { c, ..*self }
    }

    /// Output extents of a `k x k` same-padded window at `stride`.
    pub fn strided(&self, k: usize, stride: usize) -> Self {
        let pad = k / 2;
        Dims4 {
            h: (self.h + 2 * pad - k) / stride + 1,
            w: (self.w + 2 * pad - k) / stride + 1,
            ..*self
        }
    }
}

pub fn check_stride(stride: usize) -> Result<()> {
    match stride {
        1 | 2 => Ok(()),
        s => Err(Error::Config(format!("unsupported stride {s}; expected 1 or 2"))),
    }
}

/// Per-channel `k x k` convolution; `kernel` is `c x k x k`.
pub fn depthwise_forward(x: &[f64], d: Dims4, kernel: &[f64], k: usize, stride: usize) -> (Vec<f64>, Dims4) {
    let od = d.strided(k, stride);
    let pad = k as isize / 2;
    let mut y = vec![0.0; od.len()];
    for n in 0..d.n {
        for c in 0..d.c {
            let xp = &x[(n * d.c + c) * d.plane()..][..d.plane()];
            let kc = &kernel[c * k * k..(c + 1) * k * k];
            let yp = &mut y[(n * od.c + c) * od.plane()..][..od.plane()];
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        let iy = (oy * stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let row = &xp[iy as usize * d.w..][..d.w];
                        for kx in 0..k {
                            let ix = (ox * stride) as isize + kx as isize - pad;
                            if ix >= 0 && ix < d.w as isize {
                                acc += kc[ky * k + kx] * row[ix as usize];
                            }
                        }
                    }
                    yp[oy * od.w + ox] = acc;
                }
            }
        }
    }
    (y, od)
}

/// Returns `dx` and accumulates the kernel gradient into `dkernel`.
pub fn depthwise_backward(
    x: &[f64],
    d: Dims4,
    kernel: &[f64],
    k: usize,
    stride: usize,
    dy: &[f64],
    dkernel: &mut [f64],
) -> Vec<f64> {
    let od = d.strided(k, stride);
    let pad = k as isize / 2;
    let mut dx = vec![0.0; d.len()];
    for n in 0..d.n {
        for c in 0..d.c {
            let base = (n * d.c + c) * d.plane();
            let xp = &x[base..base + d.plane()];
            let dxp = &mut dx[base..base + d.plane()];
            let kc = &kernel[c * k * k..(c + 1) * k * k];
            let dkc = &mut dkernel[c * k * k..(c + 1) * k * k];
            let dyp = &dy[(n * od.c + c) * od.plane()..][..od.plane()];
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let g = dyp[oy * od.w + ox];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = (oy * stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride) as isize + kx as isize - pad;
                            if ix >= 0 && ix < d.w as isize {
                                let idx = iy as usize * d.w + ix as usize;
                                dkc[ky * k + kx] += g * xp[idx];
                                dxp[idx] += g * kc[ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// 1x1 convolution without bias; `weight` is `c_out x c_in`.
pub fn pointwise_forward(x: &[f64], d: Dims4, weight: &[f64], c_out: usize) -> (Vec<f64>, Dims4) {
    let od = d.with_channels(c_out);
    let hw = d.plane();
    let mut y = vec![0.0; od.len()];
    for n in 0..d.n {
        gemm(
            c_out,
            d.c,
            hw,
            1.0,
            weight,
            false,
            &x[n * d.c * hw..(n + 1) * d.c * hw],
            false,
            0.0,
            &mut y[n * c_out * hw..(n + 1) * c_out * hw],
        );
    }
    (y, od)
}

pub fn pointwise_backward(
    x: &[f64],
    d: Dims4,
    weight: &[f64],
    c_out: usize,
    dy: &[f64],
    dweight: &mut [f64],
) -> Vec<f64> {
    let hw = d.plane();
    let mut dx = vec![0.0; d.len()];
    for n in 0..d.n {
        let xs = &x[n * d.c * hw..(n + 1) * d.c * hw];
        let dys = &dy[n * c_out * hw..(n + 1) * c_out * hw];
        gemm(c_out, hw, d.c, 1.0, dys, false, xs, true, 1.0, dweight);
        gemm(d.c, c_out, hw, 1.0, weight, true, dys, false, 0.0, &mut dx[n * d.c * hw..(n + 1) * d.c * hw]);
    }
    dx
}

/// 3x3 average pooling; padded positions are excluded from the divisor.
pub fn avg_pool_forward(x: &[f64], d: Dims4, stride: usize) -> (Vec<f64>, Dims4) {
    let od = d.strided(3, stride);
    let mut y = vec![0.0; od.len()];
    for plane in 0..d.n * d.c {
        let xp = &x[plane * d.plane()..][..d.plane()];
        let yp = &mut y[plane * od.plane()..][..od.plane()];
        for oy in 0..od.h {
            for ox in 0..od.w {
                let (ys, ye, xs, xe) = window(oy, ox, stride, d);
                let mut acc = 0.0;
                for iy in ys..ye {
                    for ix in xs..xe {
                        acc += xp[iy * d.w + ix];
                    }
                }
                yp[oy * od.w + ox] = acc / ((ye - ys) * (xe - xs)) as f64;
            }
        }
    }
    (y, od)
}

pub fn avg_pool_backward(d: Dims4, stride: usize, dy: &[f64]) -> Vec<f64> {
    let od = d.strided(3, stride);
    let mut dx = vec![0.0; d.len()];
    for plane in 0..d.n * d.c {
        let dxp = &mut dx[plane * d.plane()..][..d.plane()];
        let dyp = &dy[plane * od.plane()..][..od.plane()];
        for oy in 0..od.h {
            for ox in 0..od.w {
                let (ys, ye, xs, xe) = window(oy, ox, stride, d);
                let g = dyp[oy * od.w + ox] / ((ye - ys) * (xe - xs)) as f64;
                for iy in ys..ye {
                    for ix in xs..xe {
                        dxp[iy * d.w + ix] += g;
                    }
                }
            }
        }
    }
    dx
}

/// 3x3 max pooling; also returns, per output, the flat input index of the
/// winning element (first maximum in row-major scan order).
pub fn max_pool_forward(x: &[f64], d: Dims4, stride: usize) -> (Vec<f64>, Vec<usize>, Dims4) {
    let od = d.strided(3, stride);
    let mut y = vec![0.0; od.len()];
    let mut arg = vec![0usize; od.len()];
    for plane in 0..d.n * d.c {
        let base = plane * d.plane();
        let xp = &x[base..base + d.plane()];
        for oy in 0..od.h {
            for ox in 0..od.w {
                let (ys, ye, xs, xe) = window(oy, ox, stride, d);
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = ys * d.w + xs;
                for iy in ys..ye {
                    for ix in xs..xe {
                        let v = xp[iy * d.w + ix];
                        if v > best {
                            best = v;
                            best_idx = iy * d.w + ix;
                        }
                    }
                }
                let o = plane * od.plane() + oy * od.w + ox;
                y[o] = best;
                arg[o] = base + best_idx;
            }
        }
    }
    (y, arg, od)
}

pub fn max_pool_backward(d: Dims4, argmax: &[usize], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; d.len()];
    for (&i, &g) in argmax.iter().zip(dy) {
        dx[i] += g;
    }
    dx
}

fn window(oy: usize, ox: usize, stride: usize, d: Dims4) -> (usize, usize, usize, usize) {
    let cy = (oy * stride) as isize;
    let cx = (ox * stride) as isize;
    let ys = (cy - 1).max(0) as usize;
    let ye = ((cy + 2) as usize).min(d.h);
    let xs = (cx - 1).max(0) as usize;
    let xe = ((cx + 2) as usize).min(d.w);
    (ys, ye, xs, xe)
}

/// Keeps every `factor`-th row and column starting at 0 (a strided 1x1 window).
pub fn subsample_forward(x: &[f64], d: Dims4, factor: usize) -> (Vec<f64>, Dims4) {
    if factor == 1 {
        return (x.to_vec(), d);
    }
    let od = Dims4 {
        h: (d.h - 1) / factor + 1,
        w: (d.w - 1) / factor + 1,
        ..d
    };
    let mut y = Vec::with_capacity(od.len());
    for plane in 0..d.n * d.c {
        let xp = &x[plane * d.plane()..][..d.plane()];
        for oy in 0..od.h {
            for ox in 0..od.w {
                y.push(xp[oy * factor * d.w + ox * factor]);
            }
        }
    }
    (y, od)
}

pub fn subsample_backward(d: Dims4, factor: usize, dy: &[f64]) -> Vec<f64> {
    if factor == 1 {
        return dy.to_vec();
    }
    let oh = (d.h - 1) / factor + 1;
    let ow = (d.w - 1) / factor + 1;
    let mut dx = vec![0.0; d.len()];
    for plane in 0..d.n * d.c {
        for oy in 0..oh {
            for ox in 0..ow {
                dx[plane * d.plane() + oy * factor * d.w + ox * factor] += dy[plane * oh * ow + oy * ow + ox];
            }
        }
    }
    dx
}

/// Parameter names of a separable convolution under `prefix`.
pub fn sep_conv_names(prefix: &str) -> (String, String) {
    (format!("{prefix}.dw"), format!("{prefix}.pw"))
}

/// Applies one of the five operators to an NCHW tensor. Separable
/// convolutions read `{prefix}.dw` (`c x k x k`) and `{prefix}.pw`
/// (`c_out x c`); identity and pooling have no parameters. Identity at stride
/// 2 subsamples.
pub fn apply_operator(
    params: &ParamSet,
    prefix: &str,
    x: &TensorBuf,
    kind: OperatorKind,
    stride: usize,
) -> Result<TensorBuf> {
    check_stride(stride)?;
    let d = Dims4::of(x)?;
    let (y, od) = match kind {
        OperatorKind::Identity => {
            if stride == 1 {
                return Ok(x.clone());
            }
            subsample_forward(x.data(), d, stride)
        }
        OperatorKind::AvgPool3x3 => avg_pool_forward(x.data(), d, stride),
        OperatorKind::MaxPool3x3 => {
            let (y, _, od) = max_pool_forward(x.data(), d, stride);
            (y, od)
        }
        OperatorKind::SepConv3x3 | OperatorKind::SepConv5x5 => {
            let k = kind.kernel_size().unwrap();
            let (dw_name, pw_name) = sep_conv_names(prefix);
            let dw = params.get(&dw_name)?;
            let pw = params.get(&pw_name)?;
            if dw.shape() != [d.c, k, k] {
                return Err(Error::Shape(format!(
                    "depthwise kernel {:?} does not match {} channels at k={k}",
                    dw.shape(),
                    d.c
                )));
            }
            let [c_out, c_in] = pw.dims::<2>()?;
            if c_in != d.c {
                return Err(Error::Shape("pointwise input channels mismatch".into()));
            }
            let (mid, md) = depthwise_forward(x.data(), d, dw.data(), k, stride);
            pointwise_forward(&mid, md, pw.data(), c_out)
        }
    };
    TensorBuf::new(od.shape(), y)
}

/// Plain 1x1 convolution (`{prefix}.w`, `c_out x c_in`) at the given stride.
pub fn conv1x1(params: &ParamSet, prefix: &str, x: &TensorBuf, stride: usize) -> Result<TensorBuf> {
    check_stride(stride)?;
    let d = Dims4::of(x)?;
    let w = params.get(&format!("{prefix}.w"))?;
    let [c_out, c_in] = w.dims::<2>()?;
    if c_in != d.c {
        return Err(Error::Shape(format!("1x1 conv expects {c_in} channels, got {}", d.c)));
    }
    let (sub, sd) = subsample_forward(x.data(), d, stride);
    let (y, od) = pointwise_forward(&sub, sd, w.data(), c_out);
    TensorBuf::new(od.shape(), y)
}

/// Backward pass of [`apply_operator`]: returns parameter gradients and `dL/dx`.
pub fn apply_operator_backward(
    params: &ParamSet,
    prefix: &str,
    x: &TensorBuf,
    kind: OperatorKind,
    stride: usize,
    grad_out: &TensorBuf,
) -> Result<(Gradients, TensorBuf)> {
    check_stride(stride)?;
    let d = Dims4::of(x)?;
    let mut grads = Gradients::zeros_like(params);
    let dx = match kind {
        OperatorKind::Identity => subsample_backward(d, stride, grad_out.data()),
        OperatorKind::AvgPool3x3 => avg_pool_backward(d, stride, grad_out.data()),
        OperatorKind::MaxPool3x3 => {
            let (_, arg, _) = max_pool_forward(x.data(), d, stride);
            max_pool_backward(d, &arg, grad_out.data())
        }
        OperatorKind::SepConv3x3 | OperatorKind::SepConv5x5 => {
            let k = kind.kernel_size().unwrap();
            let (dw_name, pw_name) = sep_conv_names(prefix);
            let dw = params.get(&dw_name)?;
            let pw = params.get(&pw_name)?;
            let [c_out, _] = pw.dims::<2>()?;
            let (mid, md) = depthwise_forward(x.data(), d, dw.data(), k, stride);
            let dmid = pointwise_backward(&mid, md, pw.data(), c_out, grad_out.data(), grads.slot(&pw_name)?);
            depthwise_backward(x.data(), d, dw.data(), k, stride, &dmid, grads.slot(&dw_name)?)
        }
    };
    Ok((grads, TensorBuf::new(d.shape(), dx)?))
}
