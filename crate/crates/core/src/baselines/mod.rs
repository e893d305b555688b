//! Zero-order and first-order Markov baselines.

mod markov;
mod zero;

use serde::{Deserialize, Serialize};

use crate::domain::{ConsumptionState, Outcome, Session};
use crate::error::Result;
use crate::predict::SessionPredictor;

pub use markov::{fit_markov, open_distribution, MarkovModel, TransitionMatrix};
pub use zero::{fit_zero_order, ZeroOrderTable};

/// Serialized form of a fitted baseline, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum BaselineModel {
    #[serde(rename = "mc")]
    Mc(MarkovModel),
    #[serde(rename = "pmc")]
    Pmc(MarkovModel),
    #[serde(rename = "zero")]
    Zero(ZeroOrderTable),
}

impl BaselineModel {
    pub fn playlist_id(&self) -> &str {
        match self {
            BaselineModel::Mc(m) | BaselineModel::Pmc(m) => &m.playlist_id,
            BaselineModel::Zero(t) => &t.playlist_id,
        }
    }

    fn inner(&self) -> &dyn SessionPredictor {
        match self {
            BaselineModel::Mc(m) | BaselineModel::Pmc(m) => m,
            BaselineModel::Zero(t) => t,
        }
    }
}

impl SessionPredictor for BaselineModel {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        self.inner().predict_session(session, horizon)
    }

    fn conditional(&self, state: &ConsumptionState, previous: Option<Outcome>) -> Option<[f64; 3]> {
        self.inner().conditional(state, previous)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Playlist;

    #[test]
    fn tagged_json() {
        let p = Playlist::from_durations("p", &[1.0; 2]).unwrap();
        let s = Session::from_outcomes("a", "p", &[Outcome::Play, Outcome::Play]);
        let m = BaselineModel::Mc(fit_markov(&[&s], &p, false, 0.0, 2).unwrap());
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["type"], "mc");
        assert_eq!(json["playlist_id"], "p");
        let z = BaselineModel::Zero(fit_zero_order(&[&s], &p, 2).unwrap());
        let back: BaselineModel = serde_json::from_str(&serde_json::to_string(&z).unwrap()).unwrap();
        assert_eq!(back, z);
        assert_eq!(back.playlist_id(), "p");
    }
}
