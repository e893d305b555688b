//! Parameter-id wrappers around the neuralkit kernels.

use crate::neuralkit::kernels::{layer_norm, layer_norm_backward, linear, linear_backward, LayerNormCache};
use crate::neuralkit::{pair_mut, Grads, Matrix, ParamId, ParamSet};

pub(crate) fn dense(params: &ParamSet, x: &Matrix, w: ParamId, b: ParamId) -> Matrix {
    linear(x, params.get(w), params.get(b))
}

/// Accumulates `dw`, `db` and returns `dx`.
pub(crate) fn dense_back(params: &ParamSet, grads: &mut Grads, x: &Matrix, w: ParamId, b: ParamId, dy: &Matrix) -> Matrix {
    let (dw, db) = pair_mut(grads, w, b);
    linear_backward(x, params.get(w), dy, dw, db)
}

pub(crate) fn norm(params: &ParamSet, x: &Matrix, g: ParamId, b: ParamId, eps: f64) -> (Matrix, LayerNormCache) {
    layer_norm(x, params.get(g), params.get(b), eps)
}

pub(crate) fn norm_back(params: &ParamSet, grads: &mut Grads, cache: &LayerNormCache, g: ParamId, b: ParamId, dy: &Matrix) -> Matrix {
    let (dg, db) = pair_mut(grads, g, b);
    layer_norm_backward(cache, params.get(g), dy, dg, db)
}
