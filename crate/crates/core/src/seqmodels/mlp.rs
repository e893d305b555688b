use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralkit::kernels::{relu, relu_backward};
use crate::neuralkit::{Grads, Matrix, ParamId, ParamSet};

use super::layers::{dense, dense_back};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 256, layers: 3 }
    }
}

/// Row-wise feedforward classifier with ReLU hidden layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub config: MlpConfig,
    layers: Vec<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

pub struct MlpCache {
    /// Input of every hidden layer and of the head.
    inputs: Vec<Matrix>,
}

impl Mlp {
    pub fn build<R: Rng>(config: &MlpConfig, input_dim: usize, n_classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { h };
                (
                    params.push_uniform(format!("mlp{l}.w"), fan_in, h, fan_in, rng),
                    params.push_uniform(format!("mlp{l}.b"), 1, h, fan_in, rng),
                )
            })
            .collect::<Vec<_>>();
        let fan_in = if config.layers == 0 { input_dim } else { h };
        let head = (
            params.push_uniform("head.w", fan_in, n_classes, fan_in, rng),
            params.push_uniform("head.b", 1, n_classes, fan_in, rng),
        );
        Mlp {
            config: config.clone(),
            layers,
            head,
        }
    }

    pub fn forward(&self, params: &ParamSet, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.rows() == 0 {
            return Err(Error::invalid("empty input"));
        }
        let mut inputs = vec![x.clone()];
        for &(w, b) in &self.layers {
            let next = relu(&dense(params, inputs.last().expect("non-empty"), w, b));
            inputs.push(next);
        }
        let logits = dense(params, inputs.last().expect("non-empty"), self.head.0, self.head.1);
        logits.ensure_finite("mlp logits")?;
        Ok((logits, MlpCache { inputs }))
    }

    pub fn backward(&self, params: &ParamSet, cache: &MlpCache, dlogits: &Matrix, grads: &mut Grads) {
        let last = cache.inputs.len() - 1;
        let mut d = dense_back(params, grads, &cache.inputs[last], self.head.0, self.head.1, dlogits);
        for (l, &(w, b)) in self.layers.iter().enumerate().rev() {
            let dpre = relu_backward(&cache.inputs[l + 1], &d);
            d = dense_back(params, grads, &cache.inputs[l], w, b, &dpre);
        }
    }
}
