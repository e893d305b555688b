use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralkit::kernels::{relu, relu_backward, softmax_in_place, LayerNormCache};
use crate::neuralkit::{dot, positional_encoding, Grads, Matrix, ParamId, ParamSet};

use super::layers::{dense, dense_back, norm, norm_back};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positional {
    /// Sinusoidal encodings added to the embedded rows.
    Fixed,
    /// A trained table with one row per position.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub embed_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub ff_dim: usize,
    /// `None` picks fixed encodings for the decoder and a learned table for
    /// the encoder.
    pub positional: Option<Positional>,
    /// Rows of the learned position table.
    pub max_positions: usize,
    pub ln_eps: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            embed_dim: 256,
            n_blocks: 3,
            n_heads: 8,
            head_dim: 32,
            ff_dim: 2048,
            positional: None,
            max_positions: 128,
            ln_eps: 1e-5,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.head_dim * self.n_heads != self.embed_dim {
            return Err(Error::invalid(format!(
                "head_dim {} x n_heads {} must equal embed_dim {}",
                self.head_dim, self.n_heads, self.embed_dim
            )));
        }
        if self.ff_dim < self.embed_dim {
            return Err(Error::invalid("ff_dim must be at least embed_dim"));
        }
        if !self.embed_dim.is_multiple_of(2) {
            return Err(Error::invalid("embed_dim must be even"));
        }
        if self.n_blocks == 0 || self.max_positions == 0 {
            return Err(Error::invalid("n_blocks and max_positions must be positive"));
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            return Err(Error::invalid("ln_eps must be positive"));
        }
        Ok(())
    }
}

/// Self-attention weights of one forward pass: `[layer][head]`, each a
/// `T x T` matrix whose row `i` holds the weights position `i` puts on every
/// position (zero where masked).
pub type AttentionTensor = Vec<Vec<Matrix>>;

#[derive(Debug, Clone)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Pre-norm Transformer stack: embedding plus positions, then blocks of
/// `h += MHSA(LN(h))` and `h += FF(LN(h))`, a final normalization and a
/// linear head producing class logits for every row.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub positional: Positional,
    we: ParamId,
    be: ParamId,
    table: Option<ParamId>,
    blocks: Vec<BlockIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    wout: ParamId,
    bout: ParamId,
}

struct BlockCache {
    ln1: LayerNormCache,
    a: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    alpha: Vec<Matrix>,
    o: Matrix,
    ln2: LayerNormCache,
    c: Matrix,
    f: Matrix,
}

pub struct TransformerCache {
    x: Matrix,
    causal: bool,
    blocks: Vec<BlockCache>,
    lnf: LayerNormCache,
    z: Matrix,
}

impl TransformerCache {
    pub fn attention(&self) -> AttentionTensor {
        self.blocks.iter().map(|b| b.alpha.clone()).collect()
    }
}

fn push_ln(params: &mut ParamSet, name: &str, dim: usize) -> (ParamId, ParamId) {
    (
        params.push(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0)),
        params.push(format!("{name}.beta"), Matrix::zeros(1, dim)),
    )
}

fn push_dense<R: Rng>(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> (ParamId, ParamId) {
    (
        params.push_uniform(format!("{name}.w"), fan_in, fan_out, fan_in, rng),
        params.push_uniform(format!("{name}.b"), 1, fan_out, fan_in, rng),
    )
}

impl Transformer {
    pub fn build<R: Rng>(config: &TransformerConfig, positional: Positional, input_dim: usize, n_classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let d = config.embed_dim;
        let (we, be) = push_dense(params, "embed", input_dim, d, rng);
        let table = (positional == Positional::Learned)
            .then(|| params.push_uniform("positions", config.max_positions, d, d, rng));
        let blocks = (0..config.n_blocks)
            .map(|b| {
                let name = |part: &str| format!("block{b}.{part}");
                let (ln1_g, ln1_b) = push_ln(params, &name("ln1"), d);
                let (wq, bq) = push_dense(params, &name("query"), d, d, rng);
                let (wk, bk) = push_dense(params, &name("key"), d, d, rng);
                let (wv, bv) = push_dense(params, &name("value"), d, d, rng);
                let (wo, bo) = push_dense(params, &name("attn_out"), d, d, rng);
                let (ln2_g, ln2_b) = push_ln(params, &name("ln2"), d);
                let (w1, b1) = push_dense(params, &name("ff1"), d, config.ff_dim, rng);
                let (w2, b2) = push_dense(params, &name("ff2"), config.ff_dim, d, rng);
                BlockIds {
                    ln1_g,
                    ln1_b,
                    wq,
                    bq,
                    wk,
                    bk,
                    wv,
                    bv,
                    wo,
                    bo,
                    ln2_g,
                    ln2_b,
                    w1,
                    b1,
                    w2,
                    b2,
                }
            })
            .collect();
        let (lnf_g, lnf_b) = push_ln(params, "final_ln", d);
        let (wout, bout) = push_dense(params, "head", d, n_classes, rng);
        Transformer {
            config: config.clone(),
            positional,
            we,
            be,
            table,
            blocks,
            lnf_g,
            lnf_b,
            wout,
            bout,
        }
    }

    /// Query and key projections of every block; zeroing them makes every
    /// attention row uniform over the positions it may attend to.
    pub fn query_key_params(&self) -> Vec<ParamId> {
        self.blocks.iter().flat_map(|b| [b.wq, b.bq, b.wk, b.bk]).collect()
    }

    /// Logits for every row. With `causal`, row `i` attends to rows `0..=i`
    /// only, and its output does not depend on later rows at all.
    pub fn forward(&self, params: &ParamSet, x: &Matrix, causal: bool) -> Result<(Matrix, TransformerCache)> {
        let t = x.rows();
        if t == 0 {
            return Err(Error::invalid("empty input sequence"));
        }
        let d = self.config.embed_dim;
        let mut h = dense(params, x, self.we, self.be);
        match self.table {
            Some(id) => {
                if t > self.config.max_positions {
                    return Err(Error::Shape(format!(
                        "sequence of {t} rows exceeds {} learned positions",
                        self.config.max_positions
                    )));
                }
                let table = params.get(id);
                for r in 0..t {
                    h.row_mut(r).iter_mut().zip(table.row(r)).for_each(|(a, b)| *a += b);
                }
            }
            None => {
                for r in 0..t {
                    h.row_mut(r)
                        .iter_mut()
                        .zip(positional_encoding(r, d))
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
        let eps = self.config.ln_eps;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (a, ln1) = norm(params, &h, b.ln1_g, b.ln1_b, eps);
            let q = dense(params, &a, b.wq, b.bq);
            let k = dense(params, &a, b.wk, b.bk);
            let v = dense(params, &a, b.wv, b.bv);
            let (o, alpha) = self.attend(&q, &k, &v, causal);
            h.add_assign(&dense(params, &o, b.wo, b.bo));
            let (c, ln2) = norm(params, &h, b.ln2_g, b.ln2_b, eps);
            let f = relu(&dense(params, &c, b.w1, b.b1));
            h.add_assign(&dense(params, &f, b.w2, b.b2));
            caches.push(BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                alpha,
                o,
                ln2,
                c,
                f,
            });
        }
        let (z, lnf) = norm(params, &h, self.lnf_g, self.lnf_b, eps);
        let logits = dense(params, &z, self.wout, self.bout);
        logits.ensure_finite("transformer logits")?;
        Ok((
            logits,
            TransformerCache {
                x: x.clone(),
                causal,
                blocks: caches,
                lnf,
                z,
            },
        ))
    }

    fn attend(&self, q: &Matrix, k: &Matrix, v: &Matrix, causal: bool) -> (Matrix, Vec<Matrix>) {
        let t = q.rows();
        let hd = self.config.head_dim;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut o = Matrix::zeros(t, self.config.embed_dim);
        let mut alphas = Vec::with_capacity(self.config.n_heads);
        let mut scores = vec![0.0; t];
        for head in 0..self.config.n_heads {
            let cols = head * hd..(head + 1) * hd;
            let mut alpha = Matrix::zeros(t, t);
            for i in 0..t {
                let span = if causal { i + 1 } else { t };
                let qi = &q.row(i)[cols.clone()];
                for j in 0..span {
                    scores[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(&mut scores[..span]);
                alpha.row_mut(i)[..span].copy_from_slice(&scores[..span]);
                let oi = &mut o.row_mut(i)[cols.clone()];
                for j in 0..span {
                    let w = scores[j];
                    for (acc, vj) in oi.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *acc += w * vj;
                    }
                }
            }
            alphas.push(alpha);
        }
        (o, alphas)
    }

    /// Accumulates parameter gradients for upstream logit gradients.
    pub fn backward(&self, params: &ParamSet, cache: &TransformerCache, dlogits: &Matrix, grads: &mut Grads) {
        let t = dlogits.rows();
        let dz = dense_back(params, grads, &cache.z, self.wout, self.bout, dlogits);
        let mut dh = norm_back(params, grads, &cache.lnf, self.lnf_g, self.lnf_b, &dz);
        for (b, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            // Feedforward branch.
            let df = dense_back(params, grads, &bc.f, b.w2, b.b2, &dh);
            let dpre = relu_backward(&bc.f, &df);
            let dc = dense_back(params, grads, &bc.c, b.w1, b.b1, &dpre);
            dh.add_assign(&norm_back(params, grads, &bc.ln2, b.ln2_g, b.ln2_b, &dc));
            // Attention branch.
            let do_ = dense_back(params, grads, &bc.o, b.wo, b.bo, &dh);
            let (dq, dk, dv) = self.attend_backward(bc, &do_, cache.causal);
            let mut da = dense_back(params, grads, &bc.a, b.wq, b.bq, &dq);
            da.add_assign(&dense_back(params, grads, &bc.a, b.wk, b.bk, &dk));
            da.add_assign(&dense_back(params, grads, &bc.a, b.wv, b.bv, &dv));
            dh.add_assign(&norm_back(params, grads, &bc.ln1, b.ln1_g, b.ln1_b, &da));
        }
        if let Some(id) = self.table {
            let g = &mut grads[id.0];
            for r in 0..t {
                g.row_mut(r).iter_mut().zip(dh.row(r)).for_each(|(a, b)| *a += b);
            }
        }
        let (dw, db) = crate::neuralkit::pair_mut(grads, self.we, self.be);
        cache.x.t_matmul_acc(&dh, dw);
        dh.col_sums_acc(db);
    }

    fn attend_backward(&self, bc: &BlockCache, d_o: &Matrix, causal: bool) -> (Matrix, Matrix, Matrix) {
        let t = d_o.rows();
        let d = self.config.embed_dim;
        let hd = self.config.head_dim;
        let scale = 1.0 / (hd as f64).sqrt();
        let (mut dq, mut dk, mut dv) = (Matrix::zeros(t, d), Matrix::zeros(t, d), Matrix::zeros(t, d));
        let mut dalpha = vec![0.0; t];
        for (head, alpha) in bc.alpha.iter().enumerate() {
            let cols = head * hd..(head + 1) * hd;
            for i in 0..t {
                let span = if causal { i + 1 } else { t };
                let doi = &d_o.row(i)[cols.clone()];
                let ai = alpha.row(i);
                for j in 0..span {
                    dalpha[j] = dot(doi, &bc.v.row(j)[cols.clone()]);
                    for (g, x) in dv.row_mut(j)[cols.clone()].iter_mut().zip(doi) {
                        *g += ai[j] * x;
                    }
                }
                let mean: f64 = (0..span).map(|j| ai[j] * dalpha[j]).sum();
                let qi = bc.q.row(i)[cols.clone()].to_vec();
                for j in 0..span {
                    let ds = ai[j] * (dalpha[j] - mean) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &bc.k.row(j)[cols.clone()];
                    for (g, x) in dq.row_mut(i)[cols.clone()].iter_mut().zip(kj) {
                        *g += ds * x;
                    }
                    for (g, x) in dk.row_mut(j)[cols.clone()].iter_mut().zip(&qi) {
                        *g += ds * x;
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}
