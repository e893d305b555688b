//! The interface shared by every model that scores sessions.

use crate::domain::{session_to_states, ConsumptionState, Event, Outcome, Session};
use crate::error::{Error, Result};

/// A model that assigns a probability to each outcome at every decision of a
/// session under teacher forcing: the distribution for event `k` may depend
/// on events `0..k` and on the bundle, never on event `k` itself.
pub trait SessionPredictor {
    /// Distributions for events `0..horizon`. `horizon` is either
    /// `session.len()` or `session.len() + 1`. Entries for existing events
    /// are conditional on the event taking place. The extra entry describes
    /// what follows the last event; once the last item is covered its SKIP
    /// component is the probability that the session ends. Entry 0 (the
    /// first position) is produced for completeness but never scored.
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>>;

    /// Distribution of what follows a state given only the state and the
    /// previous outcome, for models that depend on nothing else (same
    /// convention as the extra entry of `predict_session`). Such models can
    /// be propagated over predicted rather than realized paths.
    fn conditional(&self, _state: &ConsumptionState, _previous: Option<Outcome>) -> Option<[f64; 3]> {
        None
    }
}

impl<P: SessionPredictor + ?Sized> SessionPredictor for Box<P> {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        (**self).predict_session(session, horizon)
    }

    fn conditional(&self, state: &ConsumptionState, previous: Option<Outcome>) -> Option<[f64; 3]> {
        (**self).conditional(state, previous)
    }
}

/// Max-probability outcome for every event of a session, position 1 included.
pub fn predict_outcomes(predictor: &dyn SessionPredictor, session: &Session) -> Result<Vec<Outcome>> {
    Ok(predictor
        .predict_session(session, session.len())?
        .iter()
        .map(Outcome::argmax)
        .collect())
}

/// Zeroes infeasible outcomes and renormalizes. A distribution whose
/// feasible mass is zero becomes uniform over the feasible outcomes; with no
/// feasible outcome at all the input is returned unchanged.
pub fn mask_infeasible(probs: &[f64; 3], feasible: [bool; 3]) -> [f64; 3] {
    if !feasible.iter().any(|&f| f) {
        return *probs;
    }
    let mut out = [0.0; 3];
    let mut total = 0.0;
    for k in 0..3 {
        if feasible[k] {
            out[k] = probs[k].max(0.0);
            total += out[k];
        }
    }
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    } else {
        let count = feasible.iter().filter(|&&f| f).count();
        for k in 0..3 {
            if feasible[k] {
                out[k] = 1.0 / count as f64;
            }
        }
    }
    out
}

/// Conditions the distribution of what follows a state on a further event
/// taking place.
pub fn given_event(probs: &[f64; 3], state: &ConsumptionState, n: usize) -> [f64; 3] {
    mask_infeasible(probs, state.feasible(n))
}

/// Predicted outcome of the decision that follows a session prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextPrediction {
    pub outcome: Outcome,
    pub probs: [f64; 3],
}

/// Max-probability prediction of the next decision after `prefix` in a
/// bundle of `n` items.
pub fn predict_next(predictor: &dyn SessionPredictor, prefix: &Session, n: usize, cap: u32) -> Result<NextPrediction> {
    let states = session_to_states(prefix, n, cap)?;
    let state = states.last().expect("validated sessions are non-empty");
    if state.is_terminal(n) {
        return Err(Error::invalid(format!(
            "session {} has covered the whole bundle, no decision follows",
            prefix.session_id
        )));
    }
    let probs = *predictor
        .predict_session(prefix, prefix.len() + 1)?
        .last()
        .expect("horizon is at least one");
    Ok(NextPrediction {
        outcome: Outcome::argmax(&probs),
        probs,
    })
}

/// Item to queue after `prefix`: predictions are iterated, treating each
/// predicted skip as realized, until a play (or replay) is predicted.
/// Returns the item offset from the current item (0 for a replay, 1 for
/// the next item, ...) and `None` when the end of the bundle is reached
/// first.
pub fn queue_next(predictor: &dyn SessionPredictor, prefix: &Session, n: usize, cap: u32) -> Result<Option<usize>> {
    let mut session = prefix.clone();
    let mut offset = 0;
    loop {
        let covered = session.tracks_covered();
        if offset > 0 && covered >= n {
            return Ok(None);
        }
        let next = predict_next(predictor, &session, n, cap)?;
        match next.outcome {
            Outcome::Replay => return Ok(Some(offset)),
            Outcome::Play => return Ok(Some(offset + 1)),
            Outcome::Skip if covered >= n => return Ok(None),
            Outcome::Skip => {
                offset += 1;
                session.events.push(Event::new(covered + 1, Outcome::Skip));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Entry `k` is the distribution after `k + 1` events.
    struct Scripted(Vec<[f64; 3]>);

    impl SessionPredictor for Scripted {
        fn predict_session(&self, _session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
            Ok((0..horizon)
                .map(|k| self.0[k.saturating_sub(1).min(self.0.len() - 1)])
                .collect())
        }
    }

    #[test]
    fn next_prediction_takes_the_argmax() {
        let p = Scripted(vec![[0.9, 0.1, 0.0]]);
        let s = Session::from_outcomes("s", "p", &[Outcome::Play]);
        assert_eq!(predict_next(&p, &s, 5, 2).unwrap().outcome, Outcome::Skip);
        let long = Session::from_outcomes("s", "p", &[Outcome::Play; 6]);
        assert!(predict_next(&p, &long, 5, 2).is_err());
        let done = Session::from_outcomes("s", "p", &[Outcome::Skip; 5]);
        assert!(predict_next(&p, &done, 5, 2).is_err());
    }

    #[test]
    fn queueing_skips_until_a_play() {
        let skip = [0.7, 0.3, 0.0];
        let play = [0.2, 0.8, 0.0];
        let p = Scripted(vec![skip, skip, play]);
        let s = Session::from_outcomes("s", "p", &[Outcome::Play]);
        assert_eq!(queue_next(&p, &s, 10, 2).unwrap(), Some(3));
        assert_eq!(queue_next(&p, &s, 3, 2).unwrap(), None);
        let r = Scripted(vec![[0.1, 0.2, 0.7]]);
        assert_eq!(queue_next(&r, &s, 10, 2).unwrap(), Some(0));
    }

    #[test]
    fn masking_renormalizes_feasible_mass() {
        let p = mask_infeasible(&[0.2, 0.6, 0.2], [true, true, false]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15 && p[2] == 0.0);
        assert_eq!(mask_infeasible(&[0.5, 0.5, 0.0], [false, false, true]), [0.0, 0.0, 1.0]);
    }
}
