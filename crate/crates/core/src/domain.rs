//! Ordered bundles, listening sessions and the consumption state machine.
//!
//! A consumer enters every decision position in a state `(x_1, ..., x_i)`
//! holding the number of units consumed of each item seen so far. The next
//! event either consumes one more unit of item `i` (replay), consumes item
//! `i + 1` (play) or passes over it (skip).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Rule};

/// Default maximum number of units of one item ("no item is consumed more
/// than twice").
pub const DEFAULT_CAP: u32 = 2;

/// Choice made at one decision position.
///
/// The declaration order doubles as the tie-break order for max-probability
/// predictions: SKIP wins over PLAY, PLAY over REPLAY.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Skip,
    Play,
    Replay,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Skip, Outcome::Play, Outcome::Replay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Outcome> {
        Outcome::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Skip => "skip",
            Outcome::Play => "play",
            Outcome::Replay => "replay",
        }
    }

    /// True when the event consumes a unit of an item.
    pub fn consumes(self) -> bool {
        !matches!(self, Outcome::Skip)
    }

    /// Max-probability rule with the declared tie-break order.
    pub fn argmax(probs: &[f64; 3]) -> Outcome {
        let mut best = 0;
        for k in 1..3 {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        Outcome::ALL[best]
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Outcome::Skip),
            "play" => Ok(Outcome::Play),
            "replay" => Ok(Outcome::Replay),
            other => Err(Error::invalid(format!("unknown outcome `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: String,
    /// Seconds.
    pub duration: f64,
    #[serde(default, rename = "features", skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_features: BTreeMap<String, f64>,
}

impl Track {
    pub fn new(track_id: impl Into<String>, duration: f64) -> Result<Self> {
        let track = Track {
            track_id: track_id.into(),
            duration,
            extra_features: BTreeMap::new(),
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!(
                "track `{}` has non-positive duration {}",
                self.track_id, self.duration
            )));
        }
        Ok(())
    }
}

/// An ordered bundle. Track positions are 1-based: `tracks[0]` is position 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Playlist {
    pub playlist_id: String,
    pub tracks: Vec<Track>,
}

impl Playlist {
    pub fn new(playlist_id: impl Into<String>, tracks: Vec<Track>) -> Result<Self> {
        let playlist = Playlist {
            playlist_id: playlist_id.into(),
            tracks,
        };
        playlist.validate()?;
        Ok(playlist)
    }

    /// Playlist whose tracks are named `t1`, `t2`, ... with the given durations.
    pub fn from_durations(playlist_id: impl Into<String>, durations: &[f64]) -> Result<Self> {
        let tracks = durations
            .iter()
            .enumerate()
            .map(|(k, &d)| Track::new(format!("t{}", k + 1), d))
            .collect::<Result<Vec<_>>>()?;
        Playlist::new(playlist_id, tracks)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tracks.is_empty() {
            return Err(Error::invalid(format!(
                "playlist `{}` has no tracks",
                self.playlist_id
            )));
        }
        self.tracks.iter().try_for_each(Track::validate)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Track at a 1-based position.
    pub fn track(&self, position: usize) -> Option<&Track> {
        position.checked_sub(1).and_then(|k| self.tracks.get(k))
    }

    pub fn duration(&self, position: usize) -> f64 {
        self.track(position).map_or(0.0, |t| t.duration)
    }
}

/// One decision event: the track position it refers to and the choice made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub pos: usize,
    pub action: Outcome,
}

impl Event {
    pub fn new(pos: usize, action: Outcome) -> Self {
        Event { pos, action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub playlist_id: String,
    pub events: Vec<Event>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        playlist_id: impl Into<String>,
        events: Vec<Event>,
    ) -> Self {
        Session {
            session_id: session_id.into(),
            playlist_id: playlist_id.into(),
            events,
        }
    }

    /// Builds a session from outcomes alone, deriving track positions.
    pub fn from_outcomes(
        session_id: impl Into<String>,
        playlist_id: impl Into<String>,
        outcomes: &[Outcome],
    ) -> Self {
        let mut pos = 0;
        let events = outcomes
            .iter()
            .map(|&action| {
                if action != Outcome::Replay {
                    pos += 1;
                }
                Event::new(pos.max(1), action)
            })
            .collect();
        Session::new(session_id, playlist_id, events)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.events.iter().map(|e| e.action)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of distinct track positions the events cover.
    pub fn tracks_covered(&self) -> usize {
        self.events.last().map_or(0, |e| e.pos)
    }

    /// Checks every session invariant against a bundle of `n` items.
    pub fn validate(&self, n: usize, cap: u32) -> Result<()> {
        session_to_states(self, n, cap).map(|_| ())
    }

    /// Listening seconds spent at each event (0 for skips).
    pub fn listening_times(&self, playlist: &Playlist) -> Vec<f64> {
        self.events
            .iter()
            .map(|e| {
                if e.action.consumes() {
                    playlist.duration(e.pos)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// The vector of per-item consumption counts `(x_1, ..., x_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConsumptionState {
    counts: Vec<u32>,
    cap: u32,
}

impl ConsumptionState {
    /// State before the first decision: no item covered yet.
    pub fn initial(cap: u32) -> Self {
        ConsumptionState {
            counts: Vec::new(),
            cap: cap.max(1),
        }
    }

    pub fn from_counts(counts: Vec<u32>, cap: u32) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("consumption cap must be positive"));
        }
        if let Some(&c) = counts.iter().find(|&&c| c > cap) {
            return Err(Error::invalid(format!("count {c} exceeds cap {cap}")));
        }
        Ok(ConsumptionState { counts, cap })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// Number of items covered, `i`.
    pub fn items_covered(&self) -> usize {
        self.counts.len()
    }

    pub fn last_count(&self) -> Option<u32> {
        self.counts.last().copied()
    }

    /// Whether another unit of the current item may be consumed.
    pub fn can_replay(&self) -> bool {
        matches!(self.last_count(), Some(c) if c >= 1 && c < self.cap)
    }

    /// Feasibility of each outcome as the next event in a bundle of `n` items.
    pub fn feasible(&self, n: usize) -> [bool; 3] {
        let more = self.items_covered() < n;
        [more, more, self.can_replay()]
    }

    /// No event can follow: the last item is covered and cannot be replayed.
    pub fn is_terminal(&self, n: usize) -> bool {
        self.items_covered() >= n && !self.can_replay()
    }

    pub fn advance(&self, outcome: Outcome, n: usize) -> Result<Self> {
        advance_state(self, outcome, n)
    }
}

/// Applies one outcome to a state.
pub fn advance_state(state: &ConsumptionState, outcome: Outcome, n: usize) -> Result<ConsumptionState> {
    let mut next = state.clone();
    match outcome {
        Outcome::Replay => match state.last_count() {
            None => return Err(Error::Constraint { rule: Rule::ReplayBeforeStart }),
            Some(0) => return Err(Error::Constraint { rule: Rule::ReplayAfterSkip }),
            Some(c) if c >= state.cap => return Err(Error::Constraint { rule: Rule::CapExceeded }),
            Some(_) => *next.counts.last_mut().expect("non-empty") += 1,
        },
        Outcome::Skip | Outcome::Play => {
            if state.items_covered() >= n {
                return Err(Error::Constraint { rule: Rule::BeyondLastItem });
            }
            next.counts.push(u32::from(outcome == Outcome::Play));
        }
    }
    Ok(next)
}

/// Number of distinct states for `n` items with at most `m` units each:
/// `(m+1) + (m+1)^2 + ... + (m+1)^n = ((m+1)/m)((m+1)^n - 1)`.
pub fn count_states(n: u32, m: u32) -> Result<u128> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("count_states needs n >= 1 and m >= 1"));
    }
    let overflow = || Error::Overflow(format!("state count for n = {n}, m = {m}"));
    let base = u128::from(m) + 1;
    let power = base.checked_pow(n).ok_or_else(overflow)?;
    // (m+1)^n - 1 is divisible by m, so the division is exact.
    let geometric = (power - 1) / u128::from(m);
    base.checked_mul(geometric).ok_or_else(overflow)
}

/// State after each event of a session, validating every transition.
pub fn session_to_states(session: &Session, n: usize, cap: u32) -> Result<Vec<ConsumptionState>> {
    let fail = |index: usize, rule: Rule| Error::InvalidSession {
        session_id: session.session_id.clone(),
        index,
        rule,
    };
    if session.events.is_empty() {
        return Err(fail(0, Rule::EmptySession));
    }
    let mut state = ConsumptionState::initial(cap);
    let mut states = Vec::with_capacity(session.events.len());
    for (index, event) in session.events.iter().enumerate() {
        let expected_pos = match event.action {
            Outcome::Replay => state.items_covered(),
            Outcome::Skip | Outcome::Play => state.items_covered() + 1,
        };
        state = advance_state(&state, event.action, n).map_err(|e| match e {
            Error::Constraint { rule } => fail(index, rule),
            other => other,
        })?;
        if event.pos != expected_pos {
            return Err(fail(index, Rule::PositionMismatch));
        }
        states.push(state.clone());
    }
    Ok(states)
}
