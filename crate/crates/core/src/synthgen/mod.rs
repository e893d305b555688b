//! Synthetic session generators with known ground truth, and the oracles
//! that turn that ground truth into exact hit-rate ceilings.

mod oracle;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::MarkovModel;
use crate::dataio::Dataset;
use crate::domain::{ConsumptionState, Outcome, Playlist, Session, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::predict::mask_infeasible;

pub use oracle::{bayes_rate, first_order_rate, occupancy, rate_of, DecisionNode, OraclePredictor};

/// Pooled transition rows of the calibration playlists: rows are the previous
/// outcome, columns the next one. The PLAY row sums to 0.99
/// and is normalized when sampled.
pub const TABLE6: [[f64; 3]; 3] = [[0.85, 0.15, 0.0], [0.31, 0.65, 0.03], [0.38, 0.62, 0.0]];

/// Default first-event distribution. Position 1 has the lowest skip rate,
/// so the skip share is set below the average skip rate of the calibration
/// playlists (about 63%).
pub const DEFAULT_FIRST: [f64; 3] = [0.45, 0.55, 0.0];

/// One row of a second-order process: the distribution of the next outcome
/// after the outcomes `prev2, prev1` (`prev2` is `None` at the second event).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order2Row {
    pub prev2: Option<Outcome>,
    pub prev1: Outcome,
    pub probs: [f64; 3],
}

/// The conditional law of every event after the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Process {
    /// Position-independent first order.
    Markov1 { matrix: [[f64; 3]; 3] },
    /// First order with one matrix per number of covered items `1..=n`.
    MarkovPos { matrices: Vec<[[f64; 3]; 3]> },
    /// The next outcome depends on the last two outcomes.
    Order2 { rows: Vec<Order2Row> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_playlist_id")]
    pub playlist_id: String,
    /// Item durations in seconds; their count is the bundle size `n`.
    pub durations: Vec<f64>,
    pub sessions: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: u32,
    #[serde(default = "default_first")]
    pub first: [f64; 3],
    pub process: Process,
}

fn default_playlist_id() -> String {
    "synthetic".into()
}

fn default_cap() -> u32 {
    DEFAULT_CAP
}

fn default_first() -> [f64; 3] {
    DEFAULT_FIRST
}

/// Deterministic, varied track durations between 150 and 300 seconds.
pub fn template_durations(n: usize) -> Vec<f64> {
    (0..n).map(|k| 150.0 + ((k * 37) % 151) as f64).collect()
}

fn normalize(row: &[f64; 3]) -> [f64; 3] {
    let total: f64 = row.iter().sum();
    row.map(|v| v / total)
}

/// Outcome pairs `(prev2, prev1)` that can occur before a decision.
pub fn reachable_pairs(cap: u32) -> Vec<(Option<Outcome>, Outcome)> {
    use Outcome::*;
    let follows = |a: Outcome| -> Vec<Outcome> {
        match a {
            Skip => vec![Skip, Play],
            Play if cap >= 2 => vec![Skip, Play, Replay],
            Replay if cap >= 3 => vec![Skip, Play, Replay],
            _ => vec![Skip, Play],
        }
    };
    let mut pairs = vec![(None, Skip), (None, Play)];
    for a in Outcome::ALL {
        if a == Replay && cap < 2 {
            continue;
        }
        for b in follows(a) {
            pairs.push((Some(a), b));
        }
    }
    pairs
}

impl GeneratorSpec {
    /// Calibrated first-order process over a template playlist of `n` items.
    pub fn table6(n: usize, sessions: usize, seed: u64) -> Self {
        GeneratorSpec {
            playlist_id: default_playlist_id(),
            durations: template_durations(n),
            sessions,
            seed,
            cap: DEFAULT_CAP,
            first: DEFAULT_FIRST,
            process: Process::Markov1 { matrix: TABLE6 },
        }
    }

    /// Second-order process whose next outcome depends strongly on the
    /// outcome two steps back: after a skip, a skip that followed a play is
    /// usually answered by a play, a skip that followed a skip by another
    /// skip. A first-order predictor loses about 0.15 in hit rate on it.
    pub fn order2_demo(n: usize, sessions: usize, seed: u64) -> Self {
        use Outcome::*;
        let row = |prev2, prev1, probs| Order2Row { prev2, prev1, probs };
        GeneratorSpec {
            process: Process::Order2 {
                rows: vec![
                    row(None, Skip, [0.6, 0.4, 0.0]),
                    row(None, Play, [0.4, 0.58, 0.02]),
                    row(Some(Skip), Skip, [0.9, 0.1, 0.0]),
                    row(Some(Play), Skip, [0.25, 0.75, 0.0]),
                    row(Some(Replay), Skip, [0.5, 0.5, 0.0]),
                    row(Some(Skip), Play, [0.75, 0.22, 0.03]),
                    row(Some(Play), Play, [0.1, 0.87, 0.03]),
                    row(Some(Replay), Play, [0.3, 0.7, 0.0]),
                    row(Some(Play), Replay, [0.4, 0.6, 0.0]),
                ],
            },
            ..GeneratorSpec::table6(n, sessions, seed)
        }
    }

    /// Position-independent process re-estimated from a fitted MC model.
    /// Empty rows take the model's marginal distribution.
    pub fn from_markov(model: &MarkovModel, durations: Vec<f64>, sessions: usize, seed: u64) -> Self {
        let m = &model.matrices[0];
        let mut matrix = [[0.0; 3]; 3];
        for r in 0..3 {
            matrix[r] = if m.empty_rows[r] { model.marginal } else { m.probabilities[r] };
        }
        matrix[Outcome::Skip.index()][Outcome::Replay.index()] = 0.0;
        GeneratorSpec {
            playlist_id: model.playlist_id.clone(),
            durations,
            sessions,
            seed,
            cap: model.cap,
            first: model.first,
            process: Process::Markov1 { matrix },
        }
    }

    pub fn n(&self) -> usize {
        self.durations.len()
    }

    pub fn playlist(&self) -> Result<Playlist> {
        Playlist::from_durations(self.playlist_id.clone(), &self.durations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() {
            return Err(Error::invalid("generator needs at least one item"));
        }
        self.playlist()?;
        if self.cap == 0 {
            return Err(Error::invalid("consumption cap must be positive"));
        }
        check_row("first-event distribution", &self.first)?;
        if self.first[Outcome::Replay.index()] != 0.0 {
            return Err(Error::invalid("the first event cannot be a replay"));
        }
        let check_matrix = |name: &str, m: &[[f64; 3]; 3]| -> Result<()> {
            for prev in Outcome::ALL {
                check_row(&format!("{name}, row {prev}"), &m[prev.index()])?;
            }
            if m[Outcome::Skip.index()][Outcome::Replay.index()] != 0.0 {
                return Err(Error::invalid(format!("{name}: a skipped item cannot be replayed")));
            }
            Ok(())
        };
        match &self.process {
            Process::Markov1 { matrix } => check_matrix("matrix", matrix)?,
            Process::MarkovPos { matrices } => {
                if matrices.len() != self.n() {
                    return Err(Error::invalid(format!(
                        "{} position matrices for {} items",
                        matrices.len(),
                        self.n()
                    )));
                }
                for (k, m) in matrices.iter().enumerate() {
                    check_matrix(&format!("matrix {}", k + 1), m)?;
                }
            }
            Process::Order2 { rows } => {
                for r in rows {
                    check_row(&format!("row ({:?}, {})", r.prev2, r.prev1), &r.probs)?;
                    if r.prev1 == Outcome::Skip && r.probs[Outcome::Replay.index()] != 0.0 {
                        return Err(Error::invalid("a skipped item cannot be replayed"));
                    }
                }
                for (prev2, prev1) in reachable_pairs(self.cap) {
                    let count = rows.iter().filter(|r| r.prev2 == prev2 && r.prev1 == prev1).count();
                    if count != 1 {
                        return Err(Error::invalid(format!(
                            "order2 process needs exactly one row for ({prev2:?}, {prev1}), found {count}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalized conditional row for a decision after `covered` items.
    pub fn row(&self, covered: usize, prev2: Option<Outcome>, prev1: Outcome) -> [f64; 3] {
        let raw = match &self.process {
            Process::Markov1 { matrix } => matrix[prev1.index()],
            Process::MarkovPos { matrices } => matrices[covered.clamp(1, matrices.len()) - 1][prev1.index()],
            Process::Order2 { rows } => rows
                .iter()
                .find(|r| r.prev2 == prev2 && r.prev1 == prev1)
                .map(|r| r.probs)
                .expect("validated order2 process covers every reachable pair"),
        };
        normalize(&raw)
    }

    fn first_distribution(&self) -> [f64; 3] {
        normalize(&self.first)
    }

    /// Samples session `index`. Each session draws from its own stream of
    /// the seeded generator, so sessions do not depend on one another.
    pub fn sample_session(&self, index: usize) -> Session {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut state = ConsumptionState::initial(self.cap);
        let mut outcomes = vec![draw(&mut rng, &self.first_distribution())];
        state = state.advance(outcomes[0], n).expect("first event is a skip or play");
        let mut prev2 = None;
        let mut prev1 = outcomes[0];
        while !state.is_terminal(n) {
            let row = self.row(state.items_covered(), prev2, prev1);
            let next = if state.items_covered() < n {
                draw(&mut rng, &mask_infeasible(&row, state.feasible(n)))
            } else if rng.gen::<f64>() < row[Outcome::Replay.index()] {
                Outcome::Replay
            } else {
                break;
            };
            state = state.advance(next, n).expect("sampled outcome is feasible");
            outcomes.push(next);
            prev2 = Some(prev1);
            prev1 = next;
        }
        Session::from_outcomes(
            format!("{}-s{index:05}", self.playlist_id),
            self.playlist_id.clone(),
            &outcomes,
        )
    }
}

fn check_row(name: &str, row: &[f64; 3]) -> Result<()> {
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("{name}: entries must be finite and non-negative")));
    }
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid(format!("{name}: row has no mass")));
    }
    if (total - 1.0).abs() > 1e-9 {
        warn!("{name}: row sums to {total}; normalizing");
    }
    Ok(())
}

fn draw<R: Rng>(rng: &mut R, probs: &[f64; 3]) -> Outcome {
    let u = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = Outcome::Skip;
    for o in Outcome::ALL {
        let p = probs[o.index()];
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = o;
        if u < acc {
            return o;
        }
    }
    last
}

/// Samples every session of a spec into a single-playlist dataset.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let sessions = (0..spec.sessions).map(|k| spec.sample_session(k)).collect();
    Dataset::new(vec![spec.playlist()?], sessions, spec.cap)
}
