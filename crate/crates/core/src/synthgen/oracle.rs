use std::collections::BTreeMap;

use crate::baselines::open_distribution;
use crate::domain::{ConsumptionState, Outcome, Session};
use crate::error::Result;
use crate::predict::{given_event, mask_infeasible, SessionPredictor};

use super::{GeneratorSpec, Process};

/// A decision reached after at least one event, with everything the
/// generator conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DecisionNode {
    pub covered: usize,
    pub last_count: u32,
    pub prev2: Option<Outcome>,
    pub prev1: Outcome,
}

impl DecisionNode {
    fn can_replay(&self, cap: u32) -> bool {
        self.last_count >= 1 && self.last_count < cap
    }

    fn feasible(&self, n: usize, cap: u32) -> [bool; 3] {
        let more = self.covered < n;
        [more, more, self.can_replay(cap)]
    }

    /// Distribution of what follows: masked row before the last item,
    /// `(end, 0, replay)` at the last item.
    fn law(&self, spec: &GeneratorSpec) -> [f64; 3] {
        let row = spec.row(self.covered, self.prev2, self.prev1);
        if self.covered < spec.n() {
            mask_infeasible(&row, self.feasible(spec.n(), spec.cap))
        } else {
            let r = if self.can_replay(spec.cap) { row[Outcome::Replay.index()] } else { 0.0 };
            [1.0 - r, 0.0, r]
        }
    }

    fn after(&self, o: Outcome) -> DecisionNode {
        let (covered, last_count) = match o {
            Outcome::Replay => (self.covered, self.last_count + 1),
            Outcome::Play => (self.covered + 1, 1),
            Outcome::Skip => (self.covered + 1, 0),
        };
        DecisionNode {
            covered,
            last_count,
            prev2: Some(self.prev1),
            prev1: o,
        }
    }
}

/// Probability that each decision node is reached in a session, computed
/// exactly by propagating the first-event distribution through the process.
/// Every transition increases `(covered, last_count)`, so nodes are settled
/// in key order.
pub fn occupancy(spec: &GeneratorSpec) -> Vec<(DecisionNode, f64)> {
    let n = spec.n();
    let first = spec.first_distribution();
    let mut frontier: BTreeMap<DecisionNode, f64> = BTreeMap::new();
    for o in [Outcome::Skip, Outcome::Play] {
        if first[o.index()] > 0.0 {
            let node = DecisionNode {
                covered: 1,
                last_count: u32::from(o == Outcome::Play),
                prev2: None,
                prev1: o,
            };
            *frontier.entry(node).or_default() += first[o.index()];
        }
    }
    let mut out = Vec::new();
    while let Some((node, w)) = frontier.pop_first() {
        out.push((node, w));
        let law = node.law(spec);
        for o in Outcome::ALL {
            let p = law[o.index()];
            if p <= 0.0 || (node.covered >= n && o != Outcome::Replay) {
                continue;
            }
            *frontier.entry(node.after(o)).or_default() += w * p;
        }
    }
    out
}

/// Expected hit rate of a rule that picks an outcome at every decision,
/// pooled over all events after the first. At the last item the only event
/// that can occur is a replay, so a decision there counts as one event with
/// the replay probability as its weight.
pub fn rate_of(spec: &GeneratorSpec, mut rule: impl FnMut(&DecisionNode, &[f64; 3]) -> Outcome) -> f64 {
    let n = spec.n();
    let mut correct = 0.0;
    let mut events = 0.0;
    for (node, w) in occupancy(spec) {
        let law = node.law(spec);
        if node.covered < n {
            correct += w * law[rule(&node, &law).index()];
            events += w;
        } else {
            let r = law[Outcome::Replay.index()];
            let conditional = [0.0, 0.0, 1.0];
            correct += w * r * conditional[rule(&node, &conditional).index()];
            events += w * r;
        }
    }
    if events > 0.0 {
        correct / events
    } else {
        1.0
    }
}

/// Hit-rate ceiling: the expected rate of always predicting the true
/// conditional argmax.
pub fn bayes_rate(spec: &GeneratorSpec) -> f64 {
    rate_of(spec, |_, law| Outcome::argmax(law))
}

/// Ceiling for predictors that see only the previous outcome and which
/// outcomes are feasible (what a pooled first-order chain can express): the
/// best such rule predicts, for every previous outcome and feasibility
/// pattern, the argmax of the occupancy-weighted conditional distribution.
pub fn first_order_rate(spec: &GeneratorSpec) -> f64 {
    let n = spec.n();
    let mut pooled: BTreeMap<(Outcome, bool), [f64; 3]> = BTreeMap::new();
    for (node, w) in occupancy(spec) {
        if node.covered < n {
            let law = node.law(spec);
            let acc = pooled.entry((node.prev1, node.can_replay(spec.cap))).or_default();
            for k in 0..3 {
                acc[k] += w * law[k];
            }
        }
    }
    rate_of(spec, |node, law| {
        if node.covered < n {
            Outcome::argmax(&pooled[&(node.prev1, node.can_replay(spec.cap))])
        } else {
            Outcome::argmax(law)
        }
    })
}

/// Predicts with the generator's true conditional distributions.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub spec: GeneratorSpec,
}

impl OraclePredictor {
    pub fn new(spec: GeneratorSpec) -> Self {
        OraclePredictor { spec }
    }
}

impl SessionPredictor for OraclePredictor {
    fn predict_session(&self, session: &Session, horizon: usize) -> Result<Vec<[f64; 3]>> {
        let n = self.spec.n();
        let mut state = ConsumptionState::initial(self.spec.cap);
        let (mut prev2, mut prev1) = (None, None);
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let open = match prev1 {
                None => self.spec.first_distribution(),
                Some(p1) => open_distribution(&self.spec.row(state.items_covered(), prev2, p1), &state, n),
            };
            out.push(if k < session.len() { given_event(&open, &state, n) } else { open });
            if let Some(e) = session.events.get(k) {
                state = state.advance(e.action, n)?;
                prev2 = prev1;
                prev1 = Some(e.action);
            }
        }
        Ok(out)
    }

    fn conditional(&self, state: &ConsumptionState, previous: Option<Outcome>) -> Option<[f64; 3]> {
        if matches!(self.spec.process, Process::Order2 { .. }) {
            return None;
        }
        Some(match previous {
            None => self.spec.first_distribution(),
            Some(p1) => open_distribution(&self.spec.row(state.items_covered(), None, p1), state, self.spec.n()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, TABLE6};
    use Outcome::*;

    fn markov(matrix: [[f64; 3]; 3], first: [f64; 3], n: usize) -> GeneratorSpec {
        GeneratorSpec {
            first,
            process: Process::Markov1 { matrix },
            ..GeneratorSpec::table6(n, 0, 0)
        }
    }

    #[test]
    fn degenerate_rates() {
        let play = [[0.0, 1.0, 0.0]; 3];
        assert_eq!(bayes_rate(&markov(play, [0.0, 1.0, 0.0], 6)), 1.0);
        let coin = [[0.5, 0.5, 0.0]; 3];
        assert!((bayes_rate(&markov(coin, [0.5, 0.5, 0.0], 6)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_mass_is_conserved() {
        let spec = GeneratorSpec::table6(7, 0, 0);
        // Each session reaches exactly one node with `covered` = k for every k.
        let occ = occupancy(&spec);
        for k in 1..=7 {
            let first_visits: f64 = occ
                .iter()
                .filter(|(node, _)| node.covered == k && node.prev1 != Replay)
                .map(|(_, w)| w)
                .sum();
            assert!((first_visits - 1.0).abs() < 1e-12, "k = {k}: {first_visits}");
        }
    }

    /// Independent route: simulate sessions and score the argmax of the
    /// oracle predictor.
    fn monte_carlo_rate(spec: &GeneratorSpec) -> f64 {
        let ds = generate(spec).unwrap();
        let oracle = OraclePredictor::new(spec.clone());
        let (mut hits, mut events) = (0usize, 0usize);
        for s in &ds.sessions {
            let preds = oracle.predict_session(s, s.len()).unwrap();
            for (p, e) in preds.iter().zip(&s.events).skip(1) {
                hits += usize::from(Outcome::argmax(p) == e.action);
                events += 1;
            }
        }
        hits as f64 / events as f64
    }

    #[test]
    fn exact_rate_matches_simulation() {
        let spec = GeneratorSpec {
            sessions: 4000,
            seed: 9,
            ..GeneratorSpec::table6(12, 0, 0)
        };
        let exact = bayes_rate(&spec);
        let mc = monte_carlo_rate(&spec);
        assert!((exact - mc).abs() < 0.01, "exact {exact}, simulated {mc}");
    }

    #[test]
    fn first_order_rate_is_bayes_rate_for_first_order_processes() {
        let spec = markov(TABLE6, [0.45, 0.55, 0.0], 10);
        assert!((first_order_rate(&spec) - bayes_rate(&spec)).abs() < 1e-12);
    }

    #[test]
    fn second_order_process_opens_a_gap() {
        let spec = GeneratorSpec::order2_demo(20, 0, 0);
        spec.validate().unwrap();
        let gap = bayes_rate(&spec) - first_order_rate(&spec);
        assert!(gap > 0.1, "gap {gap}");
    }
}
