use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureEncoder;
use crate::domain::{Playlist, Session};
use crate::error::{Error, Result};
use crate::neuralkit::{AdamConfig, AdamState, Matrix};

use super::{labels_of, SequenceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sessions per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Share of training sessions held out for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            seed: 0,
            validation_fraction: 0.1,
            patience: 5,
            adam: AdamConfig::default(),
        }
    }
}

/// One session as model input and class labels.
#[derive(Debug, Clone)]
pub struct Example {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl Example {
    fn scored(&self) -> usize {
        self.labels.len().saturating_sub(1)
    }
}

pub fn prepare_examples(sessions: &[&Session], playlist: &Playlist, encoder: &FeatureEncoder) -> Vec<Example> {
    sessions
        .iter()
        .map(|s| Example {
            x: encoder.encode(s, playlist, s.len()),
            labels: labels_of(s),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_sessions: usize,
    pub validation_sessions: usize,
}

fn evaluate(model: &SequenceModel, examples: &[&Example]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0usize;
    let mut count = 0usize;
    for ex in examples {
        if ex.scored() == 0 {
            continue;
        }
        loss += model.loss_with(&model.params, &ex.x, &ex.labels)?;
        let probs = model.probabilities(&ex.x)?;
        for (r, &label) in ex.labels.iter().enumerate().skip(1) {
            let row = probs.row(r);
            let best = (0..3).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            hits += usize::from(best == label);
            count += 1;
        }
    }
    if count == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((loss / count as f64, hits as f64 / count as f64))
}

/// Mini-batch Adam on the summed cross-entropy of positions 2 onward,
/// averaged per batch. When a validation share is held out, the parameters
/// of the best validation epoch are kept.
pub fn train(model: &mut SequenceModel, examples: &[Example], config: &TrainConfig) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
    }
    let usable: Vec<&Example> = examples.iter().filter(|e| e.scored() > 0).collect();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let n_val = if config.validation_fraction > 0.0 && usable.len() >= 2 {
        ((config.validation_fraction * usable.len() as f64).round() as usize).clamp(1, usable.len() - 1)
    } else {
        0
    };
    let validation: Vec<&Example> = order[..n_val].iter().map(|&i| usable[i]).collect();
    let mut train_set: Vec<&Example> = order[n_val..].iter().map(|&i| usable[i]).collect();

    let mut report = TrainReport {
        train_sessions: train_set.len(),
        validation_sessions: validation.len(),
        ..TrainReport::default()
    };
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut best: Option<(f64, crate::neuralkit::ParamSet)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        train_set.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for (b, batch) in train_set.chunks(config.batch_size).enumerate() {
            let count: usize = batch.iter().map(|e| e.scored()).sum();
            let scale = 1.0 / count as f64;
            let mut grads = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for ex in batch {
                let (loss, _) = model.loss_and_grad(&model.params, &ex.x, &ex.labels, scale, &mut grads)?;
                batch_loss += loss;
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| g.as_slice().iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: batch_loss / count as f64,
                });
            }
            adam.step(&mut model.params, &grads)?;
            epoch_loss += batch_loss;
            epoch_count += count;
        }
        let train_loss = if epoch_count > 0 { epoch_loss / epoch_count as f64 } else { 0.0 };
        let mut log = EpochLog {
            epoch,
            train_loss,
            validation_loss: None,
            validation_hit_rate: None,
        };
        if !validation.is_empty() {
            let (vloss, vhit) = evaluate(model, &validation)?;
            log.validation_loss = Some(vloss);
            log.validation_hit_rate = Some(vhit);
            if best.as_ref().is_none_or(|(b, _)| vloss < *b) {
                best = Some((vloss, model.params.clone()));
                report.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            report.best_epoch = epoch;
        }
        debug!("epoch {epoch}: {log:?}");
        report.epochs.push(log);
        if !validation.is_empty() && since_best >= config.patience {
            report.stopped_early = epoch < config.epochs;
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    info!(
        "trained {} for {} epochs, kept epoch {}",
        model.kind(),
        report.epochs.len(),
        report.best_epoch
    );
    Ok(report)
}
