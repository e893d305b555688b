//! Forward and backward passes of the fixed kernel set every model is built
//! from: linear maps, layer normalization, softmax, pointwise nonlinearities,
//! cross-entropy and positional encodings.

use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Probability floor used by [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Softmax over a slice, in place. Callers guarantee NaN-free input.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// `-ln p[label]`, with `p` clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::invalid(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Fixed sinusoidal encoding: entry `2k` is `sin(pos / 10000^(2k/dim))`,
/// entry `2k+1` the matching cosine.
pub fn positional_encoding(position: usize, dim: usize) -> Vec<f64> {
    assert!(dim.is_multiple_of(2), "positional encoding needs an even dimension");
    let mut out = vec![0.0; dim];
    let pos = position as f64;
    for k in 0..dim / 2 {
        let angle = pos / 10000f64.powf((2 * k) as f64 / dim as f64);
        out[2 * k] = angle.sin();
        out[2 * k + 1] = angle.cos();
    }
    out
}

/// `x · w + b`.
pub fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut y = x.matmul(w);
    y.add_row(b);
    y
}

/// Backward of [`linear`]: accumulates `dw`, `db` and returns `dx`.
pub fn linear_backward(x: &Matrix, w: &Matrix, dy: &Matrix, dw: &mut Matrix, db: &mut Matrix) -> Matrix {
    x.t_matmul_acc(dy, dw);
    dy.col_sums_acc(db);
    dy.matmul_t(w)
}

/// Cached statistics of a layer-normalization forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

/// Per-row normalization to zero mean and unit variance followed by the
/// affine map `gamma * x̂ + beta`.
pub fn layer_norm(x: &Matrix, gamma: &Matrix, beta: &Matrix, eps: f64) -> (Matrix, LayerNormCache) {
    let cols = x.cols();
    let mut normalized = Matrix::zeros(x.rows(), cols);
    let mut inv_std = Vec::with_capacity(x.rows());
    let mut y = Matrix::zeros(x.rows(), cols);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        let nrow = normalized.row_mut(r);
        for (n, v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * is;
        }
        let yrow = y.row_mut(r);
        for c in 0..cols {
            yrow[c] = gamma.as_slice()[c] * nrow[c] + beta.as_slice()[c];
        }
    }
    (y, LayerNormCache { normalized, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Matrix,
    dy: &Matrix,
    dgamma: &mut Matrix,
    dbeta: &mut Matrix,
) -> Matrix {
    let cols = dy.cols();
    let mut dx = Matrix::zeros(dy.rows(), cols);
    let mut dxhat = vec![0.0; cols];
    for r in 0..dy.rows() {
        let dyr = dy.row(r);
        let xh = cache.normalized.row(r);
        for c in 0..cols {
            dgamma.as_mut_slice()[c] += dyr[c] * xh[c];
            dbeta.as_mut_slice()[c] += dyr[c];
            dxhat[c] = dyr[c] * gamma.as_slice()[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
        let is = cache.inv_std[r];
        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Backward of [`relu`] given its output.
pub fn relu_backward(out: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, &o) in dx.as_mut_slice().iter_mut().zip(out.as_slice()) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|&v| close(v, 1.0 / 3.0, 1e-15)));

        let p = softmax(&[1000.0, 0.0, 0.0]).unwrap();
        assert!(close(p[0], 1.0, 1e-15) && p[1] >= 0.0 && p.iter().all(|v| v.is_finite()));

        let p = softmax(&[2f64.ln(), 0.0, 0.0]).unwrap();
        assert!(close(p[0], 0.5, 1e-15) && close(p[1], 0.25, 1e-15) && close(p[2], 0.25, 1e-15));

        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert!(close(cross_entropy(&[1.0 / 3.0; 3], 2).unwrap(), 3f64.ln(), 1e-15));
        assert!(close(cross_entropy(&[0.0, 1.0, 0.0], 0).unwrap(), 27.631021115928547, 1e-12));
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn positional_encoding_examples() {
        let pe = positional_encoding(0, 256);
        for k in 0..128 {
            assert_eq!(pe[2 * k], 0.0);
            assert_eq!(pe[2 * k + 1], 1.0);
        }
        assert!(close(pe.iter().map(|v| v * v).sum::<f64>(), 128.0, 1e-12));
        let pe = positional_encoding(7, 256);
        assert!(close(pe[0], 7f64.sin(), 1e-15) && close(pe[1], 7f64.cos(), 1e-15));
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 10.0], vec![-4.0, 0.5, 0.25, 8.0]]).unwrap();
        let g = Matrix::filled(1, 4, 1.0);
        let b = Matrix::zeros(1, 4);
        let (_, cache) = layer_norm(&x, &g, &b, 1e-10);
        for r in 0..2 {
            let row = cache.normalized.row(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
    }
}
