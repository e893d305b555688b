//! Trained-model directories.
//!
//! ```text
//! <dir>/config.json            merged training settings
//! <dir>/manifest.json
//! <dir>/models/<playlist>/     one fitted model per playlist
//! <dir>/training/<playlist>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bundleseq_core::baselines::BaselineModel;
use bundleseq_core::dataio::{apply_session_end, split, Dataset};
use bundleseq_core::predict::SessionPredictor;
use bundleseq_core::seqmodels::{NeuralPredictor, SIDECAR_FILE};
use bundleseq_core::Playlist;

use crate::config::TrainSettings;
use crate::UsageError;

pub const CONFIG_FILE: &str = "config.json";

pub enum LoadedModel {
    Baseline(BaselineModel),
    Neural(NeuralPredictor),
}

impl LoadedModel {
    pub fn predictor(&self) -> &dyn SessionPredictor {
        match self {
            LoadedModel::Baseline(b) => b,
            LoadedModel::Neural(n) => n,
        }
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        match self {
            LoadedModel::Baseline(b) => crate::config::write_json(&dir.join(SIDECAR_FILE), b),
            LoadedModel::Neural(n) => Ok(n.save(dir)?),
        }
    }

    /// Baselines carry a `"type"` tag; neural sidecars do not.
    pub fn load(dir: &Path, playlist: &Playlist) -> anyhow::Result<Self> {
        let path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("type").is_some() {
            let b: BaselineModel = serde_json::from_value(value)?;
            if b.playlist_id() != playlist.playlist_id {
                bail!("{} holds a model for playlist `{}`", dir.display(), b.playlist_id());
            }
            Ok(LoadedModel::Baseline(b))
        } else {
            Ok(LoadedModel::Neural(NeuralPredictor::load(dir, playlist.clone())?))
        }
    }
}

/// Playlist ids become directory names.
pub fn checked_component(id: &str) -> anyhow::Result<&str> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        bail!("playlist id `{id}` cannot be used as a directory name");
    }
    Ok(id)
}

pub fn model_path(root: &Path, playlist_id: &str) -> anyhow::Result<PathBuf> {
    Ok(root.join("models").join(checked_component(playlist_id)?))
}

pub fn read_settings(root: &Path) -> anyhow::Result<TrainSettings> {
    let path = root.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("{} is not a model directory: {e}", root.display())))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The dataset as the model saw it: split with the training seed and with
/// the session-end assumption applied.
pub fn prepared(data: &Dataset, settings: &TrainSettings, end: bundleseq_core::dataio::SessionEnd) -> anyhow::Result<Dataset> {
    let data = split(data, settings.train_fraction, settings.seed)?;
    Ok(apply_session_end(&data, end))
}

/// Playlists selected by `wanted`, or all of them.
pub fn selected<'a>(data: &'a Dataset, wanted: &[String]) -> anyhow::Result<Vec<&'a Playlist>> {
    if wanted.is_empty() {
        return Ok(data.playlists.values().collect());
    }
    wanted
        .iter()
        .map(|id| data.playlist(id).map_err(|e| UsageError(e.to_string()).into()))
        .collect()
}
