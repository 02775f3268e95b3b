use super::activation::sigmoid;
use super::gemm::gemm;
use super::init::uniform_init;
use super::params::{Gradients, ParamSet};
use super::tensor::TensorBuf;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Single LSTM cell. Gate pre-activations are `x Wx + h Wh + b` with the four
/// gates laid out as column blocks `[input | forget | candidate | output]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lstm {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

/// Hidden and cell state for a batch, each `batch x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; batch * hidden],
            c: vec![0.0; batch * hidden],
        }
    }
}

/// Activations saved by [`Lstm::step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, `batch x 4 hidden`.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Lstm {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    fn names(&self) -> [String; 3] {
        [
            format!("{}.wx", self.prefix),
            format!("{}.wh", self.prefix),
            format!("{}.b", self.prefix),
        ]
    }

    /// Uniform `(-1/sqrt(hidden), 1/sqrt(hidden))` for every weight and bias.
    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        let [wx, wh, b] = self.names();
        let g = 4 * self.hidden;
        params.insert(wx, uniform_init(&[self.input, g], bound, rng)?);
        params.insert(wh, uniform_init(&[self.hidden, g], bound, rng)?);
        params.insert(b, uniform_init(&[g], bound, rng)?);
        Ok(())
    }

    fn weights<'a>(&self, params: &'a ParamSet) -> Result<[&'a [f64]; 3]> {
        let [wx, wh, b] = self.names();
        let g = 4 * self.hidden;
        let wx = params.get(&wx)?;
        let wh = params.get(&wh)?;
        let b = params.get(&b)?;
        if wx.shape() != [self.input, g] || wh.shape() != [self.hidden, g] || b.shape() != [g] {
            return Err(Error::Shape(format!(
                "lstm `{}` expects input {} hidden {}",
                self.prefix, self.input, self.hidden
            )));
        }
        Ok([wx.data(), wh.data(), b.data()])
    }

    pub fn step(
        &self,
        params: &ParamSet,
        x: &[f64],
        state: &LstmState,
        batch: usize,
    ) -> Result<(LstmState, LstmCache)> {
        let hd = self.hidden;
        if x.len() != batch * self.input {
            return Err(Error::Shape(format!(
                "lstm `{}`: input of length {} is not {batch}x{}",
                self.prefix,
                x.len(),
                self.input
            )));
        }
        if state.h.len() != batch * hd || state.c.len() != batch * hd {
            return Err(Error::Shape(format!("lstm `{}`: state width mismatch", self.prefix)));
        }
        let [wx, wh, b] = self.weights(params)?;
        let g = 4 * hd;
        let mut gates: Vec<f64> = b.iter().cycle().take(batch * g).copied().collect();
        gemm(batch, self.input, g, 1.0, x, false, wx, false, 1.0, &mut gates);
        gemm(batch, hd, g, 1.0, &state.h, false, wh, false, 1.0, &mut gates);

        let mut h = vec![0.0; batch * hd];
        let mut c = vec![0.0; batch * hd];
        let mut tanh_c = vec![0.0; batch * hd];
        for bi in 0..batch {
            let row = &mut gates[bi * g..(bi + 1) * g];
            for j in 0..hd {
                row[j] = sigmoid(row[j]);
                row[hd + j] = sigmoid(row[hd + j]);
                row[2 * hd + j] = row[2 * hd + j].tanh();
                row[3 * hd + j] = sigmoid(row[3 * hd + j]);
                let k = bi * hd + j;
                c[k] = row[hd + j] * state.c[k] + row[j] * row[2 * hd + j];
                tanh_c[k] = c[k].tanh();
                h[k] = row[3 * hd + j] * tanh_c[k];
            }
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Backpropagates `dh` and `dc` (gradients with respect to this step's
    /// output state), accumulating weight gradients. Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        params: &ParamSet,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut Gradients,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hd = self.hidden;
        let g = 4 * hd;
        let batch = cache.h_prev.len() / hd;
        let [wx, wh, _] = self.weights(params)?;
        let mut dz = vec![0.0; batch * g];
        let mut dc_prev = vec![0.0; batch * hd];
        for bi in 0..batch {
            let gate = &cache.gates[bi * g..(bi + 1) * g];
            let row = &mut dz[bi * g..(bi + 1) * g];
            for j in 0..hd {
                let k = bi * hd + j;
                let (i, f, cand, o) = (gate[j], gate[hd + j], gate[2 * hd + j], gate[3 * hd + j]);
                let tc = cache.tanh_c[k];
                let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                row[j] = dct * cand * i * (1.0 - i);
                row[hd + j] = dct * cache.c_prev[k] * f * (1.0 - f);
                row[2 * hd + j] = dct * i * (1.0 - cand * cand);
                row[3 * hd + j] = dh[k] * tc * o * (1.0 - o);
                dc_prev[k] = dct * f;
            }
        }
        let [nwx, nwh, nb] = self.names();
        gemm(self.input, batch, g, 1.0, &cache.x, true, &dz, false, 1.0, grads.slot(&nwx)?);
        gemm(hd, batch, g, 1.0, &cache.h_prev, true, &dz, false, 1.0, grads.slot(&nwh)?);
        let db = grads.slot(&nb)?;
        for row in dz.chunks(g) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![0.0; batch * self.input];
        gemm(batch, g, self.input, 1.0, &dz, false, wx, true, 0.0, &mut dx);
        let mut dh_prev = vec![0.0; batch * hd];
        gemm(batch, g, hd, 1.0, &dz, false, wh, true, 0.0, &mut dh_prev);
        Ok((dx, dh_prev, dc_prev))
    }

    /// One cell step on tensors: `x_t` is `batch x input`, `h`/`c` are `batch x hidden`.
    pub fn forward(
        &self,
        params: &ParamSet,
        x_t: &TensorBuf,
        h: &TensorBuf,
        c: &TensorBuf,
    ) -> Result<(TensorBuf, TensorBuf)> {
        let [batch, _] = x_t.dims::<2>()?;
        if h.shape() != [batch, self.hidden] || c.shape() != [batch, self.hidden] {
            return Err(Error::Shape(format!("lstm `{}`: state shape mismatch", self.prefix)));
        }
        let state = LstmState {
            h: h.data().to_vec(),
            c: c.data().to_vec(),
        };
        let (next, _) = self.step(params, x_t.data(), &state, batch)?;
        Ok((
            TensorBuf::new(vec![batch, self.hidden], next.h)?,
            TensorBuf::new(vec![batch, self.hidden], next.c)?,
        ))
    }
}
