//! LSTM sequence encoder and decoder over per-layer tokens.
//!
//! Inputs and reconstructions are batch-major: sample `b`, token `t`, slot `k`
//! lives at `(b * steps + t) * width + k`.

use crate::error::{Error, Result};
use crate::kernel::activation::sigmoid;
use crate::kernel::lstm::{Lstm, LstmCache, LstmState};
use crate::kernel::{Dense, Gradients, ParamSet};
use crate::rng::Rng;

/// Token sequence -> final hidden state -> linear projection to the embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceEncoder {
    pub lstm: Lstm,
    pub proj: Dense,
    pub steps: usize,
}

pub struct EncoderTrace {
    caches: Vec<LstmCache>,
    last_h: Vec<f64>,
    batch: usize,
}

impl SequenceEncoder {
    pub fn new(steps: usize, width: usize, hidden: usize, embed: usize) -> Self {
        SequenceEncoder {
            lstm: Lstm::new("lstm", width, hidden),
            proj: Dense::new("proj", hidden, embed),
            steps,
        }
    }

    pub fn width(&self) -> usize {
        self.lstm.input
    }

    pub fn embed_dim(&self) -> usize {
        self.proj.output
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.lstm.init(params, rng)?;
        self.proj.init(params, rng)
    }

    pub fn forward(&self, params: &ParamSet, x: &[f64], batch: usize) -> Result<(Vec<f64>, EncoderTrace)> {
        let w = self.width();
        if x.len() != batch * self.steps * w {
            return Err(Error::Shape(format!(
                "encoder expects {batch}x{}x{w} values, got {}",
                self.steps,
                x.len()
            )));
        }
        let mut state = LstmState::zeros(batch, self.lstm.hidden);
        let mut caches = Vec::with_capacity(self.steps);
        let mut xt = vec![0.0; batch * w];
        for t in 0..self.steps {
            for b in 0..batch {
                xt[b * w..(b + 1) * w].copy_from_slice(&x[(b * self.steps + t) * w..][..w]);
            }
            let (next, cache) = self.lstm.step(params, &xt, &state, batch)?;
            caches.push(cache);
            state = next;
        }
        let emb = self.proj.forward_slice(params, &state.h, batch)?;
        Ok((
            emb,
            EncoderTrace {
                caches,
                last_h: state.h,
                batch,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream embedding gradient `d_emb`.
    pub fn backward(&self, params: &ParamSet, trace: &EncoderTrace, d_emb: &[f64], grads: &mut Gradients) -> Result<()> {
        let batch = trace.batch;
        let mut dh = self.proj.backward_slice(params, &trace.last_h, batch, d_emb, grads)?;
        let mut dc = vec![0.0; batch * self.lstm.hidden];
        for cache in trace.caches.iter().rev() {
            let (_, dh_prev, dc_prev) = self.lstm.step_backward(params, cache, &dh, &dc, grads)?;
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok(())
    }
}

/// Embedding -> linear projection to the initial `(h, c)` -> LSTM unrolled for
/// `steps` tokens, each emitted through a sigmoid head and fed back as the
/// next input (the first input is the zero token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceDecoder {
    pub init: Dense,
    pub lstm: Lstm,
    pub head: Dense,
    pub steps: usize,
}

pub struct DecoderTrace {
    emb: Vec<f64>,
    caches: Vec<LstmCache>,
    hiddens: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    batch: usize,
}

impl SequenceDecoder {
    pub fn new(steps: usize, width: usize, hidden: usize, embed: usize) -> Self {
        SequenceDecoder {
            init: Dense::new("init", embed, 2 * hidden),
            lstm: Lstm::new("lstm", width, hidden),
            head: Dense::new("head", hidden, width),
            steps,
        }
    }

    pub fn width(&self) -> usize {
        self.lstm.input
    }

    pub fn embed_dim(&self) -> usize {
        self.init.input
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.init.init(params, rng)?;
        self.lstm.init(params, rng)?;
        self.head.init(params, rng)
    }

    pub fn forward(&self, params: &ParamSet, emb: &[f64], batch: usize) -> Result<(Vec<f64>, DecoderTrace)> {
        let hd = self.lstm.hidden;
        let w = self.width();
        if emb.len() != batch * self.embed_dim() {
            return Err(Error::Shape(format!(
                "decoder expects {batch}x{} embedding values, got {}",
                self.embed_dim(),
                emb.len()
            )));
        }
        let hc = self.init.forward_slice(params, emb, batch)?;
        let mut state = LstmState::zeros(batch, hd);
        for b in 0..batch {
            state.h[b * hd..(b + 1) * hd].copy_from_slice(&hc[b * 2 * hd..b * 2 * hd + hd]);
            state.c[b * hd..(b + 1) * hd].copy_from_slice(&hc[b * 2 * hd + hd..(b + 1) * 2 * hd]);
        }
        let mut input = vec![0.0; batch * w];
        let mut caches = Vec::with_capacity(self.steps);
        let mut hiddens = Vec::with_capacity(self.steps);
        let mut outputs = Vec::with_capacity(self.steps);
        let mut recon = vec![0.0; batch * self.steps * w];
        for t in 0..self.steps {
            let (next, cache) = self.lstm.step(params, &input, &state, batch)?;
            let mut y = self.head.forward_slice(params, &next.h, batch)?;
            y.iter_mut().for_each(|v| *v = sigmoid(*v));
            for b in 0..batch {
                recon[(b * self.steps + t) * w..][..w].copy_from_slice(&y[b * w..(b + 1) * w]);
            }
            caches.push(cache);
            hiddens.push(next.h.clone());
            input = y.clone();
            outputs.push(y);
            state = next;
        }
        Ok((
            recon,
            DecoderTrace {
                emb: emb.to_vec(),
                caches,
                hiddens,
                outputs,
                batch,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream gradient `d_recon` and
    /// returns the gradient with respect to the embedding.
    pub fn backward(&self, params: &ParamSet, trace: &DecoderTrace, d_recon: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        let batch = trace.batch;
        let hd = self.lstm.hidden;
        let w = self.width();
        let mut dh_carry = vec![0.0; batch * hd];
        let mut dc_carry = vec![0.0; batch * hd];
        let mut d_feedback = vec![0.0; batch * w];
        for t in (0..self.steps).rev() {
            let y = &trace.outputs[t];
            let mut dz = vec![0.0; batch * w];
            for b in 0..batch {
                for k in 0..w {
                    let i = b * w + k;
                    let dy = d_recon[(b * self.steps + t) * w + k] + d_feedback[i];
                    dz[i] = dy * y[i] * (1.0 - y[i]);
                }
            }
            let dh_head = self.head.backward_slice(params, &trace.hiddens[t], batch, &dz, grads)?;
            for (a, b) in dh_carry.iter_mut().zip(&dh_head) {
                *a += b;
            }
            let (dx, dh_prev, dc_prev) = self.lstm.step_backward(params, &trace.caches[t], &dh_carry, &dc_carry, grads)?;
            d_feedback = dx;
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        let mut d_hc = vec![0.0; batch * 2 * hd];
        for b in 0..batch {
            d_hc[b * 2 * hd..b * 2 * hd + hd].copy_from_slice(&dh_carry[b * hd..(b + 1) * hd]);
            d_hc[b * 2 * hd + hd..(b + 1) * 2 * hd].copy_from_slice(&dc_carry[b * hd..(b + 1) * hd]);
        }
        self.init.backward_slice(params, &trace.emb, batch, &d_hc, grads)
    }
}
