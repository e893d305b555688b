use serde::{Deserialize, Serialize};

use crate::domain::{Outcome, Playlist, Session};
use crate::error::{Error, Result};
use crate::neuralkit::Matrix;

/// Width of the previous-action one-hot block: SKIP, PLAY, REPLAY, NONE.
pub const PREVIOUS_ACTION_SLOTS: usize = 4;

/// Mean listening seconds still ahead at each event position, estimated on
/// training sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainingTimeTable {
    /// Entry `j - 1` belongs to event position `j`.
    pub seconds: Vec<f64>,
}

impl RemainingTimeTable {
    /// Seconds ahead at 1-based event position `j`; 0 past the table.
    pub fn get(&self, j: usize) -> f64 {
        j.checked_sub(1).and_then(|k| self.seconds.get(k)).copied().unwrap_or(0.0)
    }
}

/// For every event position `j`, the mean over sessions of the listening
/// time from event `j` to the end of the session. Sessions shorter than `j`
/// contribute 0.
pub fn predicted_remaining_time(train: &[&Session], playlist: &Playlist) -> Result<RemainingTimeTable> {
    if train.is_empty() {
        return Err(Error::invalid(format!(
            "no training sessions for playlist `{}`",
            playlist.playlist_id
        )));
    }
    let longest = train.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut sums = vec![0.0; longest];
    for s in train {
        let mut ahead = 0.0;
        for (k, t) in s.listening_times(playlist).iter().enumerate().rev() {
            ahead += t;
            sums[k] += ahead;
        }
    }
    let count = train.len() as f64;
    Ok(RemainingTimeTable {
        seconds: sums.into_iter().map(|v| v / count).collect(),
    })
}

/// Model input for one decision position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// `None` at the first position.
    pub previous_action: Option<Outcome>,
    pub predicted_remaining_time: f64,
    /// Actual listening time from this position on (only with the leak).
    pub observed_remaining_time: Option<f64>,
    /// Duration of the next item in line, the one a play or skip refers to.
    pub track_duration: f64,
    pub extra: Vec<f64>,
}

impl FeatureRow {
    pub fn previous_one_hot(&self) -> [f64; PREVIOUS_ACTION_SLOTS] {
        let mut v = [0.0; PREVIOUS_ACTION_SLOTS];
        v[self.previous_action.map_or(3, Outcome::index)] = 1.0;
        v
    }
}

/// One row per event.
pub fn build_features(session: &Session, playlist: &Playlist, table: &RemainingTimeTable, leak: bool) -> Vec<FeatureRow> {
    build_features_with_horizon(session, playlist, table, leak, &[], session.len())
}

/// Rows for `horizon` decisions; a horizon one past the last event adds the
/// row of the decision that would follow the session (its observed remaining
/// time is 0).
pub fn build_features_with_horizon(
    session: &Session,
    playlist: &Playlist,
    table: &RemainingTimeTable,
    leak: bool,
    extra_names: &[String],
    horizon: usize,
) -> Vec<FeatureRow> {
    let listening = session.listening_times(playlist);
    let mut ahead = vec![0.0; session.len() + 1];
    for k in (0..session.len()).rev() {
        ahead[k] = ahead[k + 1] + listening[k];
    }
    let n = playlist.len();
    let mut covered = 0;
    let mut rows = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let candidate = (covered + 1).min(n);
        let track = playlist.track(candidate);
        rows.push(FeatureRow {
            previous_action: k.checked_sub(1).and_then(|p| session.events.get(p)).map(|e| e.action),
            predicted_remaining_time: table.get(k + 1),
            observed_remaining_time: leak.then(|| ahead.get(k).copied().unwrap_or(0.0)),
            track_duration: track.map_or(0.0, |t| t.duration),
            extra: extra_names
                .iter()
                .map(|name| track.and_then(|t| t.extra_features.get(name)).copied().unwrap_or(0.0))
                .collect(),
        });
        if let Some(e) = session.events.get(k) {
            covered = covered.max(e.pos);
        }
    }
    rows
}

/// Which features enter the model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub previous_action: bool,
    pub remaining_time: bool,
    pub duration: bool,
    /// Names of per-track extra features.
    pub extra: Vec<String>,
    /// Replace the predicted remaining time by the observed one.
    pub leak: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            previous_action: true,
            remaining_time: true,
            duration: false,
            extra: Vec::new(),
            leak: false,
        }
    }
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        let mut d = 0;
        if self.previous_action {
            d += PREVIOUS_ACTION_SLOTS;
        }
        if self.remaining_time {
            d += 1;
        }
        if self.duration {
            d += 1;
        }
        d + self.extra.len()
    }

    fn time_value(&self, row: &FeatureRow) -> f64 {
        if self.leak {
            row.observed_remaining_time.unwrap_or(0.0)
        } else {
            row.predicted_remaining_time
        }
    }
}

/// Z-score statistics of the continuous inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Standardizer { mean: 0.0, std: 1.0 };
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub time: Standardizer,
    pub duration: Standardizer,
    pub extra: Vec<Standardizer>,
}

impl FeatureScaler {
    pub fn fit(spec: &FeatureSpec, rows: &[FeatureRow]) -> Self {
        FeatureScaler {
            time: Standardizer::fit(rows.iter().map(|r| spec.time_value(r))),
            duration: Standardizer::fit(rows.iter().map(|r| r.track_duration)),
            extra: (0..spec.extra.len())
                .map(|k| Standardizer::fit(rows.iter().map(|r| r.extra.get(k).copied().unwrap_or(0.0))))
                .collect(),
        }
    }
}

/// Everything needed to turn a session into a model input matrix: the
/// feature selection, the remaining-time table and the scaler, all fitted on
/// training sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub spec: FeatureSpec,
    pub table: RemainingTimeTable,
    pub scaler: FeatureScaler,
}

impl FeatureEncoder {
    pub fn fit(spec: FeatureSpec, train: &[&Session], playlist: &Playlist) -> Result<Self> {
        let table = predicted_remaining_time(train, playlist)?;
        let rows: Vec<FeatureRow> = train
            .iter()
            .flat_map(|s| build_features_with_horizon(s, playlist, &table, spec.leak, &spec.extra, s.len()))
            .collect();
        let scaler = FeatureScaler::fit(&spec, &rows);
        Ok(FeatureEncoder { spec, table, scaler })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn rows(&self, session: &Session, playlist: &Playlist, horizon: usize) -> Vec<FeatureRow> {
        build_features_with_horizon(session, playlist, &self.table, self.spec.leak, &self.spec.extra, horizon)
    }

    pub fn encode_rows(&self, rows: &[FeatureRow]) -> Matrix {
        let dim = self.dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if self.spec.previous_action {
                data.extend_from_slice(&r.previous_one_hot());
            }
            if self.spec.remaining_time {
                data.push(self.scaler.time.apply(self.spec.time_value(r)));
            }
            if self.spec.duration {
                data.push(self.scaler.duration.apply(r.track_duration));
            }
            for (k, s) in self.scaler.extra.iter().enumerate() {
                data.push(s.apply(r.extra.get(k).copied().unwrap_or(0.0)));
            }
        }
        Matrix::from_vec(rows.len(), dim, data).expect("row width matches the spec")
    }

    /// Input matrix with `horizon` rows for a session.
    pub fn encode(&self, session: &Session, playlist: &Playlist, horizon: usize) -> Matrix {
        self.encode_rows(&self.rows(session, playlist, horizon))
    }
}
