//! Session logs and playlist metadata: loading, splitting, session-end
//! handling, feature rows and prompt export.

mod features;
mod io;
mod prompts;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Event, Outcome, Playlist, Session, DEFAULT_CAP};
use crate::error::{Error, Result};

pub use features::{
    build_features, build_features_with_horizon, predicted_remaining_time, FeatureEncoder, FeatureRow, FeatureScaler,
    FeatureSpec, RemainingTimeTable, Standardizer, PREVIOUS_ACTION_SLOTS,
};
pub use io::{
    load_dataset, load_playlists, load_sessions, write_playlists_jsonl, write_sessions_csv, write_sessions_jsonl,
    LoadIssue, LoadOptions, Loaded, SessionFormat,
};
pub use prompts::{export_prompts, format_duration, parse_prompt, write_prompts_jsonl, PromptLine, PromptPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// How a session is treated after the listener's last consumed item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionEnd {
    /// Every remaining item counts as skipped.
    #[default]
    Full,
    /// The session ends with its last play or replay.
    Truncate,
}

impl fmt::Display for SessionEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionEnd::Full => "full",
            SessionEnd::Truncate => "truncate",
        })
    }
}

impl FromStr for SessionEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SessionEnd::Full),
            "truncate" => Ok(SessionEnd::Truncate),
            other => Err(Error::invalid(format!("unknown session-end mode `{other}`"))),
        }
    }
}

/// Playlists plus the sessions recorded on them. `splits[k]` tags
/// `sessions[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub playlists: BTreeMap<String, Playlist>,
    pub sessions: Vec<Session>,
    pub splits: Vec<Split>,
    pub cap: u32,
}

impl Dataset {
    /// Validates every session against its playlist; all sessions start in
    /// the training split.
    pub fn new(playlists: Vec<Playlist>, sessions: Vec<Session>, cap: u32) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in playlists {
            p.validate()?;
            if map.insert(p.playlist_id.clone(), p).is_some() {
                return Err(Error::invalid("duplicate playlist id"));
            }
        }
        for s in &sessions {
            let playlist = map
                .get(&s.playlist_id)
                .ok_or_else(|| Error::UnknownPlaylist(s.playlist_id.clone()))?;
            s.validate(playlist.len(), cap)?;
        }
        let splits = vec![Split::Train; sessions.len()];
        Ok(Dataset {
            playlists: map,
            sessions,
            splits,
            cap,
        })
    }

    pub fn with_default_cap(playlists: Vec<Playlist>, sessions: Vec<Session>) -> Result<Self> {
        Dataset::new(playlists, sessions, DEFAULT_CAP)
    }

    pub fn playlist(&self, id: &str) -> Result<&Playlist> {
        self.playlists.get(id).ok_or_else(|| Error::UnknownPlaylist(id.to_string()))
    }

    /// Sessions of one playlist in one split, in file order.
    pub fn sessions_in(&self, playlist_id: &str, split: Split) -> Vec<&Session> {
        self.sessions
            .iter()
            .zip(&self.splits)
            .filter(|(s, &t)| t == split && s.playlist_id == playlist_id)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn sessions_of(&self, playlist_id: &str) -> Vec<&Session> {
        self.sessions.iter().filter(|s| s.playlist_id == playlist_id).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&t| t == split).count()
    }
}

/// Stratified random split: within every playlist, `round(f * count)`
/// sessions go to TRAIN and the rest to TEST. Playlists are processed in id
/// order from a single seeded stream, so the assignment is a pure function of
/// the session list and the seed.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} is not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; dataset.sessions.len()];
    for id in dataset.playlists.keys() {
        let mut members: Vec<usize> = (0..dataset.sessions.len())
            .filter(|&k| &dataset.sessions[k].playlist_id == id)
            .collect();
        if members.len() < 2 {
            if !members.is_empty() {
                warn!("playlist {id} has fewer than 2 sessions; all assigned to TRAIN");
            }
            continue;
        }
        members.shuffle(&mut rng);
        let n_train = (train_fraction * members.len() as f64).round() as usize;
        let n_train = n_train.clamp(1, members.len() - 1);
        for &k in &members[n_train..] {
            splits[k] = Split::Test;
        }
    }
    Ok(Dataset {
        splits,
        ..dataset.clone()
    })
}

/// Applies a session-end assumption to one session.
///
/// Under `Truncate` a session with no consumed item keeps its first event so
/// that it is never empty.
pub fn end_session(session: &Session, n: usize, mode: SessionEnd) -> Session {
    let mut events = session.events.clone();
    match mode {
        SessionEnd::Full => {
            let covered = session.tracks_covered();
            events.extend((covered + 1..=n).map(|pos| Event::new(pos, Outcome::Skip)));
        }
        SessionEnd::Truncate => {
            let keep = events.iter().rposition(|e| e.action.consumes()).map_or(1, |k| k + 1);
            events.truncate(keep.max(1));
        }
    }
    Session {
        events,
        ..session.clone()
    }
}

pub fn apply_session_end(dataset: &Dataset, mode: SessionEnd) -> Dataset {
    let sessions = dataset
        .sessions
        .iter()
        .map(|s| {
            let n = dataset.playlists.get(&s.playlist_id).map_or(0, Playlist::len);
            end_session(s, n, mode)
        })
        .collect();
    Dataset {
        sessions,
        ..dataset.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    fn uniform_playlist(id: &str, n: usize) -> Playlist {
        Playlist::from_durations(id, &vec![200.0; n]).unwrap()
    }

    fn dataset(playlists: &[(&str, usize)]) -> Dataset {
        let mut sessions = Vec::new();
        for (id, count) in playlists {
            for k in 0..*count {
                sessions.push(Session::from_outcomes(format!("{id}-{k}"), *id, &[Play, Skip, Play]));
            }
        }
        let lists = playlists.iter().map(|(id, _)| uniform_playlist(id, 3)).collect();
        Dataset::with_default_cap(lists, sessions).unwrap()
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = dataset(&[("a", 100)]);
        let s1 = split(&ds, 0.9, 7).unwrap();
        assert_eq!(s1.count(Split::Train), 90);
        assert_eq!(s1.count(Split::Test), 10);
        assert_eq!(s1.splits, split(&ds, 0.9, 7).unwrap().splits);

        let names: Vec<String> = (0..10).map(|k| format!("p{k}")).collect();
        let spec: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 100)).collect();
        let s = split(&dataset(&spec), 0.9, 7).unwrap();
        for n in &names {
            assert_eq!(s.sessions_in(n, Split::Train).len(), 90);
            assert_eq!(s.sessions_in(n, Split::Test).len(), 10);
        }
    }

    #[test]
    fn tiny_playlists_stay_in_train() {
        let s = split(&dataset(&[("a", 1)]), 0.9, 1).unwrap();
        assert_eq!(s.count(Split::Test), 0);
        assert!(split(&dataset(&[("a", 4)]), 1.0, 1).is_err());
    }

    #[test]
    fn session_end_modes() {
        let outcomes = [Play, Skip, Play, Replay, Skip, Play];
        let s = Session::from_outcomes("s", "p", &outcomes);
        let full = end_session(&s, 10, SessionEnd::Full);
        assert_eq!(full.tracks_covered(), 10);
        assert!(full.events[6..].iter().all(|e| e.action == Skip));
        assert_eq!(full.events[6..].iter().map(|e| e.pos).collect::<Vec<_>>(), vec![6, 7, 8, 9, 10]);
        full.validate(10, 2).unwrap();

        let trailing = Session::from_outcomes("s", "p", &[Play, Skip, Play, Replay, Skip, Play, Skip, Skip]);
        let cut = end_session(&trailing, 10, SessionEnd::Truncate);
        assert_eq!(cut.events, s.events);
        assert_eq!(cut.tracks_covered(), 5);

        let done = Session::from_outcomes("s", "p", &[Play, Skip, Play]);
        assert_eq!(end_session(&done, 3, SessionEnd::Full), done);
        assert_eq!(end_session(&done, 3, SessionEnd::Truncate), done);

        let silent = Session::from_outcomes("s", "p", &[Skip, Skip]);
        assert_eq!(end_session(&silent, 3, SessionEnd::Truncate).len(), 1);
    }

    #[test]
    fn orphan_sessions_are_rejected() {
        let s = Session::from_outcomes("s", "missing", &[Play]);
        let err = Dataset::with_default_cap(vec![uniform_playlist("p", 2)], vec![s]).unwrap_err();
        assert!(matches!(err, Error::UnknownPlaylist(_)));
    }
}
