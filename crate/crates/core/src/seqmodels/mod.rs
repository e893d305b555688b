//! Neural next-outcome predictors: MLP, LSTM, and decoder-only and encoder
//! (bidirectional) Transformers, trained with teacher forcing.

mod layers;
mod lstm;
mod mlp;
mod train;
mod transformer;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureEncoder, FeatureSpec};
use crate::domain::{ConsumptionState, Outcome, Playlist, Session};
use crate::error::{Error, Result};
use crate::neuralkit::kernels::{cross_entropy, softmax_in_place};
use crate::neuralkit::{Grads, Matrix, ParamSet};
use crate::predict::{given_event, SessionPredictor};

pub use lstm::{Lstm, LstmConfig};
pub use mlp::{Mlp, MlpConfig};
pub use train::{prepare_examples, train, EpochLog, Example, TrainConfig, TrainReport};
pub use transformer::{AttentionTensor, Positional, Transformer, TransformerConfig};

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Lstm,
    /// Decoder-only Transformer with causal attention.
    Transformer,
    /// Transformer with bidirectional attention during training.
    Encoder,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::Transformer => "transformer",
            ModelKind::Encoder => "encoder",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "lstm" => Ok(ModelKind::Lstm),
            "transformer" | "decoder" => Ok(ModelKind::Transformer),
            "encoder" | "bert" => Ok(ModelKind::Encoder),
            other => Err(Error::invalid(format!("unknown neural model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[serde(default)]
    pub transformer: TransformerConfig,
    #[serde(default)]
    pub lstm: LstmConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
    /// Reserved; only 0 is supported.
    #[serde(default)]
    pub dropout: f64,
    /// Zero infeasible outcomes in predictions (training is unaffected).
    #[serde(default)]
    pub mask_feasible: bool,
    #[serde(default)]
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_dim: usize) -> Self {
        ModelConfig {
            kind,
            input_dim,
            transformer: TransformerConfig::default(),
            lstm: LstmConfig::default(),
            mlp: MlpConfig::default(),
            dropout: 0.0,
            mask_feasible: false,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.dropout != 0.0 {
            return Err(Error::Unsupported("dropout is not implemented; set it to 0".into()));
        }
        match self.kind {
            ModelKind::Transformer | ModelKind::Encoder => self.transformer.validate(),
            ModelKind::Lstm if self.lstm.hidden == 0 || self.lstm.layers == 0 => {
                Err(Error::invalid("LSTM needs at least one layer of positive width"))
            }
            ModelKind::Mlp if self.mlp.hidden == 0 => Err(Error::invalid("MLP hidden width must be positive")),
            _ => Ok(()),
        }
    }

    pub fn positional(&self) -> Positional {
        self.transformer.positional.unwrap_or(match self.kind {
            ModelKind::Encoder => Positional::Learned,
            _ => Positional::Fixed,
        })
    }
}

#[derive(Debug, Clone)]
enum Net {
    Mlp(Mlp),
    Lstm(Lstm),
    Transformer(Transformer),
}

pub enum Cache {
    Mlp(mlp::MlpCache),
    Lstm(lstm::LstmCache),
    Transformer(transformer::TransformerCache),
}

/// A neural model: its configuration, parameters and the layout that maps
/// layers to parameters.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    net: Net,
}

fn softmax_matrix(mut logits: Matrix) -> Matrix {
    for r in 0..logits.rows() {
        softmax_in_place(logits.row_mut(r));
    }
    logits
}

impl SequenceModel {
    /// Freshly initialized model (seeded by `config.init_seed`).
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        let d = config.input_dim;
        let net = match config.kind {
            ModelKind::Mlp => Net::Mlp(Mlp::build(&config.mlp, d, N_CLASSES, &mut params, &mut rng)),
            ModelKind::Lstm => Net::Lstm(Lstm::build(&config.lstm, d, N_CLASSES, &mut params, &mut rng)),
            ModelKind::Transformer | ModelKind::Encoder => Net::Transformer(Transformer::build(
                &config.transformer,
                config.positional(),
                d,
                N_CLASSES,
                &mut params,
                &mut rng,
            )),
        };
        Ok(SequenceModel { config, params, net })
    }

    /// Model with the given parameters, which must match the layout implied
    /// by the configuration name for name and shape for shape.
    pub fn with_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = SequenceModel::new(config)?;
        if model.params.len() != params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} arrays, model expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for (want, got) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Shape(format!(
                    "checkpoint array `{}` {:?} does not match `{}` {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn transformer(&self) -> Option<&Transformer> {
        match &self.net {
            Net::Transformer(t) => Some(t),
            _ => None,
        }
    }

    /// Training-mode forward pass: logits for every row. The encoder
    /// attends in both directions here.
    pub fn forward_with(&self, params: &ParamSet, x: &Matrix) -> Result<(Matrix, Cache)> {
        if x.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.config.input_dim
            )));
        }
        Ok(match &self.net {
            Net::Mlp(m) => {
                let (l, c) = m.forward(params, x)?;
                (l, Cache::Mlp(c))
            }
            Net::Lstm(m) => {
                let (l, c) = m.forward(params, x)?;
                (l, Cache::Lstm(c))
            }
            Net::Transformer(t) => {
                let (l, c) = t.forward(params, x, self.config.kind == ModelKind::Transformer)?;
                (l, Cache::Transformer(c))
            }
        })
    }

    pub fn backward_with(&self, params: &ParamSet, cache: &Cache, dlogits: &Matrix, grads: &mut Grads) {
        match (&self.net, cache) {
            (Net::Mlp(m), Cache::Mlp(c)) => m.backward(params, c, dlogits, grads),
            (Net::Lstm(m), Cache::Lstm(c)) => m.backward(params, c, dlogits, grads),
            (Net::Transformer(t), Cache::Transformer(c)) => t.backward(params, c, dlogits, grads),
            _ => panic!("cache does not belong to this model"),
        }
    }

    /// Summed cross-entropy over rows `1..` (the first position is never
    /// scored) and its gradient, scaled by `scale`, accumulated into
    /// `grads`. Returns the unscaled loss sum and the number of scored rows.
    pub fn loss_and_grad(&self, params: &ParamSet, x: &Matrix, labels: &[usize], scale: f64, grads: &mut Grads) -> Result<(f64, usize)> {
        let (logits, cache) = self.forward_with(params, x)?;
        let mut dlogits = Matrix::zeros(logits.rows(), N_CLASSES);
        let mut total = 0.0;
        let mut count = 0;
        for (r, &label) in labels.iter().enumerate().take(logits.rows()).skip(1) {
            let mut p = logits.row(r).to_vec();
            softmax_in_place(&mut p);
            total += cross_entropy(&p, label)?;
            count += 1;
            let d = dlogits.row_mut(r);
            for k in 0..N_CLASSES {
                d[k] = scale * (p[k] - f64::from(u8::from(k == label)));
            }
        }
        self.backward_with(params, &cache, &dlogits, grads);
        Ok((total, count))
    }

    /// Summed cross-entropy over rows `1..` without gradients.
    pub fn loss_with(&self, params: &ParamSet, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let (logits, _) = self.forward_with(params, x)?;
        let probs = softmax_matrix(logits);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate().take(probs.rows()).skip(1) {
            total += cross_entropy(probs.row(r), label)?;
        }
        Ok(total)
    }

    /// Prediction-mode class probabilities for every row: row `j` sees input
    /// rows `0..=j` only. For the encoder this means one forward pass per
    /// prefix.
    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        if self.config.kind != ModelKind::Encoder {
            return Ok(softmax_matrix(self.forward_with(&self.params, x)?.0));
        }
        let mut out = Matrix::zeros(x.rows(), N_CLASSES);
        for j in 0..x.rows() {
            let (logits, _) = self.forward_with(&self.params, &x.head_rows(j + 1))?;
            let mut p = logits.row(j).to_vec();
            softmax_in_place(&mut p);
            out.row_mut(j).copy_from_slice(&p);
        }
        Ok(out)
    }

    /// Attention weights of a causal forward pass over all rows.
    pub fn attention(&self, x: &Matrix) -> Result<AttentionTensor> {
        let t = self
            .transformer()
            .ok_or_else(|| Error::Unsupported(format!("{} models have no attention", self.kind())))?;
        let (_, cache) = t.forward(&self.params, x, true)?;
        Ok(cache.attention())
    }
}

/// A trained neural model bound to one playlist and its fitted features.
#[derive(Debug, Clone)]
pub struct NeuralPredictor {
    pub model: SequenceModel,
    pub encoder: FeatureEncoder,
    pub playlist: Playlist,
    pub cap: u32,
}

/// Everything besides the parameters that a saved model needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralSidecar {
    pub playlist_id: String,
    pub cap: u32,
    pub model: ModelConfig,
    pub features: FeatureEncoder,
}

pub const PARAMS_STEM: &str = "params";
pub const SIDECAR_FILE: &str = "model.json";

impl NeuralPredictor {
    pub fn input(&self, session: &Session, horizon: usize) -> Matrix {
        self.encoder.encode(session, &self.playlist, horizon)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.params.save(dir, PARAMS_STEM)?;
        let sidecar = NeuralSidecar {
            playlist_id: self.playlist.playlist_id.clone(),
            cap: self.cap,
            model: self.model.config.clone(),
            features: self.encoder.clone(),
        };
        fs::write(dir.join(SIDECAR_FILE), serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, playlist: Playlist) -> Result<Self> {
        let sidecar: NeuralSidecar = serde_json::from_str(&fs::read_to_string(dir.join(SIDECAR_FILE))?)?;
        if sidecar.playlist_id != playlist.playlist_id {
            return Err(Error::invalid(format!(
                "model was trained for playlist `{}`, not `{}`",
                sidecar.playlist_id, playlist.playlist_id
            )));
        }
        let params = ParamSet::load(dir, PARAMS_STEM)?;
        Ok(NeuralPredictor {
            model: SequenceModel::with_params(sidecar.model, params)?,
            encoder: sidecar.features,
            playlist,
            cap: sidecar.cap,
        })
    }
}

impl SessionPredictor for NeuralPredictor {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        let probs = self.model.probabilities(&self.input(session, horizon))?;
        let n = self.playlist.len();
        let mut state = ConsumptionState::initial(self.cap);
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let row = probs.row(k);
            let p = [row[0], row[1], row[2]];
            out.push(if self.model.config.mask_feasible && k < session.len() {
                given_event(&p, &state, n)
            } else {
                p
            });
            if let Some(e) = session.events.get(k) {
                state = state.advance(e.action, n)?;
            }
        }
        Ok(out)
    }
}

/// Fits features on the training sessions of one playlist, builds a model
/// of the requested shape and trains it.
pub fn fit_neural(
    train_sessions: &[&Session],
    playlist: &Playlist,
    cap: u32,
    features: FeatureSpec,
    mut config: ModelConfig,
    train_config: &TrainConfig,
) -> Result<(NeuralPredictor, TrainReport)> {
    let encoder = FeatureEncoder::fit(features, train_sessions, playlist)?;
    config.input_dim = encoder.dim();
    let mut model = SequenceModel::new(config)?;
    let examples = prepare_examples(train_sessions, playlist, &encoder);
    let report = train(&mut model, &examples, train_config)?;
    Ok((
        NeuralPredictor {
            model,
            encoder,
            playlist: playlist.clone(),
            cap,
        },
        report,
    ))
}

/// Labels of a session's events as class indices.
pub fn labels_of(session: &Session) -> Vec<usize> {
    session.outcomes().map(Outcome::index).collect()
}
