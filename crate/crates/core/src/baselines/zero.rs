use serde::{Deserialize, Serialize};

use crate::domain::{ConsumptionState, Outcome, Playlist, Session};
use crate::error::{Error, Result};
use crate::predict::{given_event, SessionPredictor};

use super::markov::open_distribution;

/// Per-item distribution of the number of units consumed, `p(x_i = x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOrderTable {
    pub playlist_id: String,
    pub cap: u32,
    /// `probs[i - 1][x]` for item `i` and `x = 0..=cap`.
    pub probs: Vec<Vec<f64>>,
}

/// Empirical frequencies of consumption counts per item. Items a session
/// never reaches count as 0.
pub fn fit_zero_order(train: &[&Session], playlist: &Playlist, cap: u32) -> Result<ZeroOrderTable> {
    if train.is_empty() {
        return Err(Error::invalid(format!("no training sessions for playlist `{}`", playlist.playlist_id)));
    }
    let n = playlist.len();
    let width = cap as usize + 1;
    let mut counts = vec![vec![0.0; width]; n];
    for s in train {
        let mut units = vec![0usize; n];
        for e in &s.events {
            if e.action.consumes() {
                units[e.pos - 1] += 1;
            }
        }
        for (i, &u) in units.iter().enumerate() {
            counts[i][u.min(width - 1)] += 1.0;
        }
    }
    let total = train.len() as f64;
    Ok(ZeroOrderTable {
        playlist_id: playlist.playlist_id.clone(),
        cap,
        probs: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c / total).collect())
            .collect(),
    })
}

impl ZeroOrderTable {
    pub fn n(&self) -> usize {
        self.probs.len()
    }

    /// `p(x_i = x)`, 0 outside the table.
    pub fn p(&self, item: usize, x: usize) -> f64 {
        item.checked_sub(1)
            .and_then(|k| self.probs.get(k))
            .and_then(|row| row.get(x))
            .copied()
            .unwrap_or(0.0)
    }

    /// Expected units consumed of each item, `Σ_x x p(x_i = x)`.
    pub fn expected_units(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|row| row.iter().enumerate().map(|(x, p)| x as f64 * p).sum())
            .collect()
    }

    /// Distribution of what follows a state. A replay of item `i` has the
    /// unconditional probability of consuming it more often than so far;
    /// the remaining mass is split between skip and play of item `i + 1`
    /// by `p(x_{i+1} = 0)`, or is the probability of ending at the last item.
    pub fn next_distribution(&self, state: &ConsumptionState) -> [f64; 3] {
        let i = state.items_covered();
        let replay = match state.last_count() {
            Some(c) if state.can_replay() => (c as usize + 1..=self.cap as usize).map(|x| self.p(i, x)).sum(),
            _ => 0.0,
        };
        let skip = self.p(i + 1, 0);
        let raw = [(1.0 - replay) * skip, (1.0 - replay) * (1.0 - skip), replay];
        open_distribution(&raw, state, self.n())
    }
}

impl SessionPredictor for ZeroOrderTable {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        let mut state = ConsumptionState::initial(self.cap);
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let p = self.next_distribution(&state);
            out.push(if k < session.len() { given_event(&p, &state, self.n()) } else { p });
            if let Some(e) = session.events.get(k) {
                state = state.advance(e.action, self.n())?;
            }
        }
        Ok(out)
    }

    fn conditional(&self, state: &ConsumptionState, _previous: Option<Outcome>) -> Option<[f64; 3]> {
        Some(self.next_distribution(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    #[test]
    fn frequencies_per_item() {
        let p = Playlist::from_durations("p", &[1.0; 3]).unwrap();
        let mut sessions = Vec::new();
        for k in 0..10 {
            let third = if k < 7 { Skip } else { Play };
            let mut o = vec![Play];
            if k < 2 {
                o.push(Replay);
            }
            o.extend([Play, third]);
            sessions.push(Session::from_outcomes(format!("s{k}"), "p", &o));
        }
        let refs: Vec<&Session> = sessions.iter().collect();
        let t = fit_zero_order(&refs, &p, 2).unwrap();
        assert!((t.p(3, 0) - 0.7).abs() < 1e-12);
        assert!((t.p(1, 2) - 0.2).abs() < 1e-12);
        for row in &t.probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((t.expected_units()[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn distribution_follows_state() {
        let t = ZeroOrderTable {
            playlist_id: "p".into(),
            cap: 2,
            probs: vec![vec![0.2, 0.6, 0.2], vec![0.77, 0.23, 0.0]],
        };
        let start = ConsumptionState::initial(2);
        assert_eq!(t.next_distribution(&start), [0.2, 0.8, 0.0]);
        let after_play = start.advance(Play, 2).unwrap();
        let d = t.next_distribution(&after_play);
        assert!((d[2] - 0.2).abs() < 1e-12 && (d[0] - 0.8 * 0.77).abs() < 1e-12);
        let last = after_play.advance(Play, 2).unwrap();
        assert_eq!(t.next_distribution(&last), [1.0, 0.0, 0.0]);
        let s = Session::from_outcomes("s", "p", &[Play, Play, Replay]);
        assert_eq!(t.predict_session(&s, 3).unwrap()[2], [0.0, 0.0, 1.0]);
        let skipped = after_play.advance(Skip, 2).unwrap();
        let s = Session::from_outcomes("s", "p", &[Play, Skip]);
        let preds = t.predict_session(&s, 3).unwrap();
        assert_eq!(preds[2], t.next_distribution(&skipped));
    }
}
