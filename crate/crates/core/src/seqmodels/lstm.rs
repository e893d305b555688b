use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralkit::kernels::{relu, relu_backward, sigmoid};
use crate::neuralkit::{Grads, Matrix, ParamId, ParamSet};

use super::layers::{dense, dense_back};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig { hidden: 128, layers: 2 }
    }
}

#[derive(Debug, Clone)]
struct LayerIds {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

/// Stacked LSTM over the rows of a session with a two-layer feedforward
/// head on the top hidden state. Gate blocks are ordered input, forget,
/// candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub config: LstmConfig,
    layers: Vec<LayerIds>,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

struct LayerCache {
    x: Matrix,
    h_prev: Matrix,
    c_prev: Matrix,
    /// Activated gates `[i | f | g | o]` per step.
    gates: Matrix,
    tanh_c: Matrix,
}

pub struct LstmCache {
    layers: Vec<LayerCache>,
    top: Matrix,
    hidden_out: Matrix,
}

impl Lstm {
    pub fn build<R: Rng>(config: &LstmConfig, input_dim: usize, n_classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { h };
                LayerIds {
                    wx: params.push_uniform(format!("lstm{l}.wx"), fan_in, 4 * h, h, rng),
                    wh: params.push_uniform(format!("lstm{l}.wh"), h, 4 * h, h, rng),
                    b: params.push_uniform(format!("lstm{l}.b"), 1, 4 * h, h, rng),
                }
            })
            .collect();
        Lstm {
            config: config.clone(),
            layers,
            w1: params.push_uniform("head1.w", h, h, h, rng),
            b1: params.push_uniform("head1.b", 1, h, h, rng),
            w2: params.push_uniform("head2.w", h, n_classes, h, rng),
            b2: params.push_uniform("head2.b", 1, n_classes, h, rng),
        }
    }

    pub fn forward(&self, params: &ParamSet, x: &Matrix) -> Result<(Matrix, LstmCache)> {
        let t = x.rows();
        if t == 0 {
            return Err(Error::invalid("empty input sequence"));
        }
        let h = self.config.hidden;
        let mut input = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for ids in &self.layers {
            // Input contributions for all steps at once; the recurrent part
            // is added step by step.
            let mut pre = dense(params, &input, ids.wx, ids.b);
            let wh = params.get(ids.wh);
            let mut h_prev = Matrix::zeros(t, h);
            let mut c_prev = Matrix::zeros(t, h);
            let mut tanh_c = Matrix::zeros(t, h);
            let mut out = Matrix::zeros(t, h);
            let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
            for s in 0..t {
                h_prev.row_mut(s).copy_from_slice(&hs);
                c_prev.row_mut(s).copy_from_slice(&cs);
                let g = pre.row_mut(s);
                for (k, &hk) in hs.iter().enumerate() {
                    if hk == 0.0 {
                        continue;
                    }
                    for (gj, w) in g.iter_mut().zip(wh.row(k)) {
                        *gj += hk * w;
                    }
                }
                for j in 0..h {
                    g[j] = sigmoid(g[j]);
                    g[h + j] = sigmoid(g[h + j]);
                    g[2 * h + j] = g[2 * h + j].tanh();
                    g[3 * h + j] = sigmoid(g[3 * h + j]);
                    cs[j] = g[h + j] * cs[j] + g[j] * g[2 * h + j];
                    let tc = cs[j].tanh();
                    tanh_c.row_mut(s)[j] = tc;
                    hs[j] = g[3 * h + j] * tc;
                }
                out.row_mut(s).copy_from_slice(&hs);
            }
            caches.push(LayerCache {
                x: input,
                h_prev,
                c_prev,
                gates: pre,
                tanh_c,
            });
            input = out;
        }
        let hidden_out = relu(&dense(params, &input, self.w1, self.b1));
        let logits = dense(params, &hidden_out, self.w2, self.b2);
        logits.ensure_finite("lstm logits")?;
        Ok((
            logits,
            LstmCache {
                layers: caches,
                top: input,
                hidden_out,
            },
        ))
    }

    pub fn backward(&self, params: &ParamSet, cache: &LstmCache, dlogits: &Matrix, grads: &mut Grads) {
        let h = self.config.hidden;
        let dhid = dense_back(params, grads, &cache.hidden_out, self.w2, self.b2, dlogits);
        let dpre = relu_backward(&cache.hidden_out, &dhid);
        let mut d_out = dense_back(params, grads, &cache.top, self.w1, self.b1, &dpre);
        for (ids, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let t = d_out.rows();
            let wh = params.get(ids.wh);
            let mut dgates = Matrix::zeros(t, 4 * h);
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for s in (0..t).rev() {
                let g = lc.gates.row(s);
                let tc = lc.tanh_c.row(s);
                let cp = lc.c_prev.row(s);
                let dg = dgates.row_mut(s);
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dh = d_out.row(s)[j] + dh_next[j];
                    let dc = dh * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
                    dg[j] = dc * gg * i * (1.0 - i);
                    dg[h + j] = dc * cp[j] * f * (1.0 - f);
                    dg[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dg[3 * h + j] = dh * tc[j] * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                for (k, dn) in dh_next.iter_mut().enumerate() {
                    *dn = crate::neuralkit::dot(wh.row(k), dg);
                }
            }
            lc.h_prev.t_matmul_acc(&dgates, &mut grads[ids.wh.0]);
            d_out = dense_back(params, grads, &lc.x, ids.wx, ids.b, &dgates);
        }
    }
}
