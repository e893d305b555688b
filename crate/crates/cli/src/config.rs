//! Run configurations. Every command reads an optional JSON file into its
//! settings struct (unknown keys are rejected, missing keys take the
//! defaults), applies command-line flags on top and persists the result.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use bundleseq_core::dataio::{load_dataset, Dataset, FeatureSpec, LoadOptions, SessionEnd, SessionFormat};
use bundleseq_core::evalkit::DemandMode;
use bundleseq_core::neuralkit::AdamConfig;
use bundleseq_core::seqmodels::{LstmConfig, MlpConfig, ModelKind, TrainConfig, TransformerConfig};
use bundleseq_core::DEFAULT_CAP;
use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Where sessions and playlists come from: either a directory holding
/// `playlists.jsonl` and `sessions.jsonl` (or `sessions.csv`), or both
/// files given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub sessions: Option<PathBuf>,
    pub playlists: Option<PathBuf>,
    pub format: SessionFormat,
    /// Abort on sessions that break a transition rule instead of skipping
    /// them.
    pub strict: bool,
    pub cap: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            sessions: None,
            playlists: None,
            format: SessionFormat::Jsonl,
            strict: false,
            cap: DEFAULT_CAP,
        }
    }
}

impl DataConfig {
    pub fn is_set(&self) -> bool {
        self.dir.is_some() || self.sessions.is_some() || self.playlists.is_some()
    }

    pub fn paths(&self) -> anyhow::Result<(PathBuf, PathBuf)> {
        let file = match self.format {
            SessionFormat::Jsonl => "sessions.jsonl",
            SessionFormat::Csv => "sessions.csv",
        };
        let sessions = self
            .sessions
            .clone()
            .or_else(|| self.dir.as_ref().map(|d| d.join(file)));
        let playlists = self
            .playlists
            .clone()
            .or_else(|| self.dir.as_ref().map(|d| d.join("playlists.jsonl")));
        match (sessions, playlists) {
            (Some(s), Some(p)) => Ok((s, p)),
            _ => Err(UsageError("no data given: pass --data DIR or both --sessions and --playlists".into()).into()),
        }
    }

    pub fn load(&self) -> anyhow::Result<Dataset> {
        let (sessions, playlists) = self.paths()?;
        let loaded = load_dataset(
            &sessions,
            &playlists,
            LoadOptions {
                format: self.format,
                strict: self.strict,
                cap: self.cap,
            },
        )?;
        if !loaded.issues.is_empty() {
            log::warn!("{} invalid sessions skipped", loaded.issues.len());
        }
        Ok(loaded.dataset)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// First-order process with the pooled calibration transition rows.
    #[default]
    Table6,
    /// Second-order process with a large first-order blind spot.
    Order2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    /// Generator spec file; when absent the preset is used.
    pub spec: Option<PathBuf>,
    pub preset: Preset,
    /// Bundle size of the preset.
    pub tracks: usize,
    /// Overrides the spec's session count.
    pub sessions: Option<usize>,
    /// Overrides the spec's seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub format: SessionFormat,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings {
            spec: None,
            preset: Preset::Table6,
            tracks: 20,
            sessions: None,
            seed: None,
            out: PathBuf::from("data"),
            format: SessionFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// First-order Markov chain pooled over positions.
    #[default]
    Mc,
    /// Position-dependent Markov chain.
    Pmc,
    /// Zero-order consumption-count model.
    Zero,
    Mlp,
    Lstm,
    /// Decoder-only Transformer.
    Transformer,
    /// Transformer with bidirectional attention in training.
    Encoder,
}

impl ModelChoice {
    pub fn neural(self) -> Option<ModelKind> {
        match self {
            ModelChoice::Mlp => Some(ModelKind::Mlp),
            ModelChoice::Lstm => Some(ModelKind::Lstm),
            ModelChoice::Transformer => Some(ModelKind::Transformer),
            ModelChoice::Encoder => Some(ModelKind::Encoder),
            _ => None,
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: DataConfig,
    pub out: PathBuf,
    pub model: ModelChoice,
    /// Seeds the split, the initialization and the batch order.
    pub seed: u64,
    pub train_fraction: f64,
    pub session_end: SessionEnd,
    /// Playlists to train on; empty means all.
    pub playlists: Vec<String>,
    /// Additive smoothing of Markov counts.
    pub smoothing: f64,
    pub features: FeatureSpec,
    pub transformer: TransformerConfig,
    pub lstm: LstmConfig,
    pub mlp: MlpConfig,
    pub mask_feasible: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            data: DataConfig::default(),
            out: PathBuf::from("model"),
            model: ModelChoice::Mc,
            seed: 0,
            train_fraction: 0.9,
            session_end: SessionEnd::Full,
            playlists: Vec::new(),
            smoothing: 0.0,
            features: FeatureSpec::default(),
            transformer: TransformerConfig::default(),
            lstm: LstmConfig::default(),
            mlp: MlpConfig::default(),
            mask_feasible: false,
            epochs: 30,
            batch_size: 16,
            validation_fraction: 0.1,
            patience: 5,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            patience: self.patience,
            adam: self.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    /// Defaults to the data the first model was trained on.
    pub data: DataConfig,
    pub models: Vec<PathBuf>,
    pub out: PathBuf,
    /// Defaults to each model's training setting.
    pub session_end: Option<SessionEnd>,
    pub demand: DemandMode,
    pub playlists: Vec<String>,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            data: DataConfig::default(),
            models: Vec::new(),
            out: PathBuf::from("eval"),
            session_end: None,
            demand: DemandMode::Realized,
            playlists: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSettings {
    pub data: DataConfig,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub playlists: Vec<String>,
}

impl Default for AttentionSettings {
    fn default() -> Self {
        AttentionSettings {
            data: DataConfig::default(),
            model: None,
            out: PathBuf::from("attention"),
            playlists: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PromptSplit {
    Train,
    Test,
    /// Every session, unsplit.
    #[default]
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSettings {
    pub data: DataConfig,
    pub out: PathBuf,
    pub split: PromptSplit,
    pub dedupe: bool,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for PromptSettings {
    fn default() -> Self {
        PromptSettings {
            data: DataConfig::default(),
            out: PathBuf::from("prompts"),
            split: PromptSplit::All,
            dedupe: false,
            seed: 0,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSettings {
    pub data: DataConfig,
    /// Also write `summary.csv` and `summary.json` here.
    pub out: Option<PathBuf>,
}
