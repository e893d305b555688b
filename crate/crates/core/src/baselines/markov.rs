use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{ConsumptionState, Outcome, Playlist, Session};
use crate::error::{Error, Result};
use crate::predict::{given_event, mask_infeasible, SessionPredictor};

/// `P(next | previous)` for one position (or pooled over positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Number of items covered before the decision, for position-dependent
    /// models; `None` when pooled.
    pub position: Option<usize>,
    /// Rows indexed by the previous outcome, columns by the next one.
    pub probabilities: [[f64; 3]; 3],
    pub counts: [[f64; 3]; 3],
    /// Rows with neither observed nor smoothed mass.
    pub empty_rows: [bool; 3],
    pub smoothing: f64,
}

impl TransitionMatrix {
    /// Row-normalizes counts after adding `smoothing` to every feasible cell.
    pub fn from_counts(counts: [[f64; 3]; 3], feasible: [[bool; 3]; 3], smoothing: f64, position: Option<usize>) -> Self {
        let mut probabilities = [[0.0; 3]; 3];
        let mut empty_rows = [false; 3];
        for r in 0..3 {
            let mut row = [0.0; 3];
            for c in 0..3 {
                if feasible[r][c] {
                    row[c] = counts[r][c] + smoothing;
                }
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for c in 0..3 {
                    probabilities[r][c] = row[c] / total;
                }
            } else {
                empty_rows[r] = true;
            }
        }
        TransitionMatrix {
            position,
            probabilities,
            counts,
            empty_rows,
            smoothing,
        }
    }

    pub fn row(&self, previous: Outcome) -> Option<&[f64; 3]> {
        (!self.empty_rows[previous.index()]).then(|| &self.probabilities[previous.index()])
    }
}

/// Feasible `(previous, next)` cells when `covered` of `n` items are covered.
/// At the last item the SKIP column records sessions that end instead of
/// replaying it.
fn feasible_cells(covered: usize, n: usize, cap: u32) -> [[bool; 3]; 3] {
    if covered >= n {
        return [[false; 3], [true, false, cap >= 2], [true, false, cap >= 3]];
    }
    [[true, true, false], [true, true, cap >= 2], [true, true, cap >= 3]]
}

/// First-order Markov baseline, pooled (MC) or position-dependent (pMC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub playlist_id: String,
    pub n: usize,
    pub cap: u32,
    pub position_dependent: bool,
    /// One pooled matrix, or one per number of covered items `1..=n`.
    pub matrices: Vec<TransitionMatrix>,
    /// Outcome frequencies at the first position.
    pub first: [f64; 3],
    /// Outcome frequencies over all later positions, used for empty rows.
    pub marginal: [f64; 3],
}

fn normalized(counts: [f64; 3]) -> [f64; 3] {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.map(|c| c / total)
    } else {
        [0.5, 0.5, 0.0]
    }
}

/// Fits MC (`position_dependent = false`) or pMC on training sessions of one
/// playlist. Transitions are keyed by the number of items covered before the
/// decision; `smoothing` is added to feasible cells only. The pMC matrix of
/// the last item also counts sessions that stop where a replay was possible.
pub fn fit_markov(train: &[&Session], playlist: &Playlist, position_dependent: bool, smoothing: f64, cap: u32) -> Result<MarkovModel> {
    if train.is_empty() {
        return Err(Error::invalid(format!("no training sessions for playlist `{}`", playlist.playlist_id)));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid("smoothing must be a non-negative number"));
    }
    let n = playlist.len();
    let keys = if position_dependent { n } else { 1 };
    let mut counts = vec![[[0.0; 3]; 3]; keys];
    let mut first = [0.0; 3];
    let mut marginal = [0.0; 3];
    for s in train {
        let mut covered = 0;
        for (k, e) in s.events.iter().enumerate() {
            if k == 0 {
                first[e.action.index()] += 1.0;
            } else {
                let prev = s.events[k - 1].action;
                let key = if position_dependent { covered - 1 } else { 0 };
                counts[key][prev.index()][e.action.index()] += 1.0;
                marginal[e.action.index()] += 1.0;
            }
            covered = covered.max(e.pos);
        }
        let last = s.events.last().expect("validated sessions are non-empty").action;
        if position_dependent && covered == n && last == Outcome::Play && cap >= 2 {
            counts[n - 1][last.index()][Outcome::Skip.index()] += 1.0;
        }
    }
    let matrices = counts
        .into_iter()
        .enumerate()
        .map(|(key, c)| {
            if position_dependent {
                TransitionMatrix::from_counts(c, feasible_cells(key + 1, n, cap), smoothing, Some(key + 1))
            } else {
                TransitionMatrix::from_counts(c, feasible_cells(0, n, cap), smoothing, None)
            }
        })
        .collect();
    Ok(MarkovModel {
        playlist_id: playlist.playlist_id.clone(),
        n,
        cap,
        position_dependent,
        matrices,
        first: normalized(first),
        marginal: normalized(marginal),
    })
}

impl MarkovModel {
    pub fn matrix(&self, covered: usize) -> &TransitionMatrix {
        if self.position_dependent {
            &self.matrices[covered.clamp(1, self.n) - 1]
        } else {
            &self.matrices[0]
        }
    }

    /// Distribution of what follows a state, the second value telling
    /// whether the marginal fallback was used. At the last item, SKIP stands
    /// for the session ending.
    pub fn next_distribution(&self, state: &ConsumptionState, previous: Option<Outcome>) -> ([f64; 3], bool) {
        let Some(prev) = previous else {
            return (self.first, false);
        };
        let (row, fallback) = match self.matrix(state.items_covered()).row(prev) {
            Some(r) => (*r, false),
            None => (self.marginal, true),
        };
        (open_distribution(&row, state, self.n), fallback)
    }
}

/// Restricts a transition row to a state. Before the last item infeasible
/// outcomes are masked out; at the last item the replay probability is kept
/// and the rest is the probability of ending.
pub fn open_distribution(row: &[f64; 3], state: &ConsumptionState, n: usize) -> [f64; 3] {
    if state.items_covered() < n {
        return mask_infeasible(row, state.feasible(n));
    }
    let total: f64 = row.iter().sum();
    let r = if state.can_replay() && total > 0.0 { row[2] / total } else { 0.0 };
    [1.0 - r, 0.0, r]
}

impl SessionPredictor for MarkovModel {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::with_capacity(horizon);
        let mut state = ConsumptionState::initial(self.cap);
        let mut previous = None;
        let mut fallbacks = 0;
        for k in 0..horizon {
            let (p, fell_back) = self.next_distribution(&state, previous);
            fallbacks += usize::from(fell_back);
            out.push(if k < session.len() { given_event(&p, &state, self.n) } else { p });
            if let Some(e) = session.events.get(k) {
                state = state.advance(e.action, self.n)?;
                previous = Some(e.action);
            }
        }
        if fallbacks > 0 {
            warn!(
                "session {}: {fallbacks} decisions used the marginal distribution of playlist {} (empty transition row)",
                session.session_id, self.playlist_id
            );
        }
        Ok(out)
    }

    fn conditional(&self, state: &ConsumptionState, previous: Option<Outcome>) -> Option<[f64; 3]> {
        Some(self.next_distribution(state, previous).0)
    }
}
