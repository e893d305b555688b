use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ConsumptionState, Outcome, Playlist, Session};
use crate::error::{Error, Result};
use crate::predict::SessionPredictor;

/// How predicted plays are accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandMode {
    /// Along each holdout session's realized events.
    #[default]
    Realized,
    /// Over the model's own predicted paths from the start of a session,
    /// which needs a model with a state-level conditional distribution.
    Propagated,
}

impl FromStr for DemandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realized" => Ok(DemandMode::Realized),
            "propagated" => Ok(DemandMode::Propagated),
            other => Err(Error::invalid(format!("unknown demand mode `{other}`"))),
        }
    }
}

impl fmt::Display for DemandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandMode::Realized => "realized",
            DemandMode::Propagated => "propagated",
        })
    }
}

/// Expected plays of one track per session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    /// 1-based track position.
    pub track: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// Mean units (plays and replays) of every track over the sessions.
pub fn actual_units(sessions: &[&Session], n: usize) -> Vec<f64> {
    let mut units = vec![0.0; n];
    for s in sessions {
        for e in s.events.iter().filter(|e| e.action.consumes()) {
            units[e.pos - 1] += 1.0;
        }
    }
    let count = sessions.len().max(1) as f64;
    units.iter().map(|u| u / count).collect()
}

fn realized_units(predictor: &dyn SessionPredictor, sessions: &[&Session], n: usize) -> Result<Vec<f64>> {
    let mut units = vec![0.0; n];
    for s in sessions {
        let preds = predictor.predict_session(s, s.len() + 1)?;
        for (k, e) in s.events.iter().enumerate() {
            if e.action != Outcome::Replay {
                units[e.pos - 1] += preds[k][Outcome::Play.index()];
            }
            if e.action != Outcome::Play {
                continue;
            }
            // The decision after a play of the last item may end the session,
            // so it needs the open distribution of the prefix.
            let next = if e.pos < n || k + 1 == s.len() {
                preds[k + 1]
            } else {
                let prefix = Session::new(s.session_id.clone(), s.playlist_id.clone(), s.events[..=k].to_vec());
                *predictor.predict_session(&prefix, k + 2)?.last().expect("non-empty horizon")
            };
            units[e.pos - 1] += next[Outcome::Replay.index()];
        }
    }
    let count = sessions.len() as f64;
    Ok(units.iter().map(|u| u / count).collect())
}

/// Decision node of the propagation: items covered, count of the current
/// item and previous outcome. The conditional distributions are assumed to
/// depend on nothing else.
type Node = (usize, u32, Option<usize>);

fn propagated_units(predictor: &dyn SessionPredictor, n: usize, cap: u32) -> Result<Vec<f64>> {
    let mut units = vec![0.0; n];
    let mut frontier: BTreeMap<Node, f64> = BTreeMap::new();
    frontier.insert((0, 0, None), 1.0);
    while let Some(((covered, last, prev), mass)) = frontier.pop_first() {
        let counts = if covered == 0 {
            Vec::new()
        } else {
            let mut c = vec![1; covered - 1];
            c.push(last);
            c
        };
        let state = ConsumptionState::from_counts(counts, cap)?;
        let previous = prev.and_then(Outcome::from_index);
        let p = predictor
            .conditional(&state, previous)
            .ok_or_else(|| Error::Unsupported("propagated demand needs a state-level model".into()))?;
        if covered < n {
            *frontier.entry((covered + 1, 0, Some(0))).or_default() += mass * p[0];
            *frontier.entry((covered + 1, 1, Some(1))).or_default() += mass * p[1];
            units[covered] += mass * p[1];
        }
        if state.can_replay() && p[2] > 0.0 {
            *frontier.entry((covered, last + 1, Some(2))).or_default() += mass * p[2];
            units[covered - 1] += mass * p[2];
        }
    }
    Ok(units)
}

/// Actual and predicted plays per track from the second track on.
pub fn demand_rates(
    predictor: &dyn SessionPredictor,
    sessions: &[&Session],
    playlist: &Playlist,
    cap: u32,
    mode: DemandMode,
) -> Result<Vec<DemandRow>> {
    if sessions.is_empty() {
        return Err(Error::invalid(format!(
            "no holdout sessions for playlist `{}`",
            playlist.playlist_id
        )));
    }
    let n = playlist.len();
    let actual = actual_units(sessions, n);
    let predicted = match mode {
        DemandMode::Realized => realized_units(predictor, sessions, n)?,
        DemandMode::Propagated => propagated_units(predictor, n, cap)?,
    };
    Ok((1..n)
        .map(|i| DemandRow {
            track: i + 1,
            actual: actual[i],
            predicted: predicted[i],
        })
        .collect())
}
