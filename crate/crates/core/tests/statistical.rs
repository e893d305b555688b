//! Statistical properties checked on synthetic data with known ground truth.

use bundleseq_core::baselines::{fit_markov, fit_zero_order};
use bundleseq_core::dataio::{split, Split};
use bundleseq_core::evalkit::{evaluate_playlist, summary_statistics, DemandMode};
use bundleseq_core::synthgen::{bayes_rate, generate, GeneratorSpec, OraclePredictor, TABLE6};
use bundleseq_core::{Outcome, Session};

fn sessions(data: &bundleseq_core::dataio::Dataset) -> Vec<&Session> {
    data.sessions.iter().collect()
}

#[test]
fn mc_recovers_the_generating_matrix() {
    let spec = GeneratorSpec::table6(100, 5000, 1);
    let data = generate(&spec).unwrap();
    let mc = fit_markov(&sessions(&data), &spec.playlist().unwrap(), false, 0.0, 2).unwrap();
    let m = &mc.matrices[0];
    for prev in Outcome::ALL {
        let truth = TABLE6[prev.index()];
        let total: f64 = truth.iter().sum();
        for next in Outcome::ALL {
            let want = truth[next.index()] / total;
            let got = m.probabilities[prev.index()][next.index()];
            assert!((got - want).abs() < 0.02, "{prev}->{next}: {got} vs {want}");
        }
    }
}

#[test]
fn refitting_a_fitted_chain_reproduces_the_data() {
    let spec = GeneratorSpec::table6(30, 3000, 2);
    let data = generate(&spec).unwrap();
    let mc = fit_markov(&sessions(&data), &spec.playlist().unwrap(), false, 0.0, 2).unwrap();
    let again = generate(&GeneratorSpec::from_markov(&mc, spec.durations.clone(), 3000, 99)).unwrap();
    let (a, b) = (&summary_statistics(&data)[0], &summary_statistics(&again)[0]);
    assert!((a.skip_pct - b.skip_pct).abs() < 1.5, "{a:?} vs {b:?}");
    assert!((a.replay_pct - b.replay_pct).abs() < 0.5, "{a:?} vs {b:?}");
    assert!((a.avg_listening_time - b.avg_listening_time).abs() / a.avg_listening_time < 0.03);
}

#[test]
fn first_order_fit_misses_second_order_structure() {
    let spec = GeneratorSpec::order2_demo(20, 3000, 3);
    let data = generate(&spec).unwrap();
    let mc = fit_markov(&sessions(&data), &spec.playlist().unwrap(), false, 0.0, 2).unwrap();
    let after_skip = mc.matrices[0].probabilities[Outcome::Skip.index()];
    // Empirical P(next | prev2, prev1 = SKIP) by direct counting.
    let mut counts = [[0.0; 3]; 3];
    for s in &data.sessions {
        for w in s.events.windows(3) {
            if w[1].action == Outcome::Skip {
                counts[w[0].action.index()][w[2].action.index()] += 1.0;
            }
        }
    }
    let residual = [Outcome::Skip, Outcome::Play]
        .iter()
        .map(|p2| {
            let row = counts[p2.index()];
            let total: f64 = row.iter().sum();
            (row[0] / total - after_skip[0]).abs()
        })
        .fold(0.0, f64::max);
    assert!(residual > 0.2, "residual {residual}");
}

#[test]
fn fitted_models_stay_below_the_oracle() {
    let spec = GeneratorSpec::table6(20, 4000, 4);
    let data = split(&generate(&spec).unwrap(), 0.9, 4).unwrap();
    let playlist = spec.playlist().unwrap();
    let train = data.sessions_in(&spec.playlist_id, Split::Train);
    let test = data.sessions_in(&spec.playlist_id, Split::Test);
    let bayes = bayes_rate(&spec);
    let oracle = evaluate_playlist(&OraclePredictor::new(spec.clone()), &test, &playlist, 2, DemandMode::Realized).unwrap();
    let obs = oracle.hits.total as f64;
    let sigma = (bayes * (1.0 - bayes) / obs).sqrt();
    assert!((oracle.hit_rate.unwrap() - bayes).abs() < 3.0 * sigma, "{:?} vs {bayes}", oracle.hit_rate);
    let mc = fit_markov(&train, &playlist, false, 0.0, 2).unwrap();
    let pmc = fit_markov(&train, &playlist, true, 0.0, 2).unwrap();
    let zero = fit_zero_order(&train, &playlist, 2).unwrap();
    for (name, rate) in [
        ("mc", evaluate_playlist(&mc, &test, &playlist, 2, DemandMode::Realized).unwrap().hit_rate),
        ("pmc", evaluate_playlist(&pmc, &test, &playlist, 2, DemandMode::Realized).unwrap().hit_rate),
        ("zero", evaluate_playlist(&zero, &test, &playlist, 2, DemandMode::Realized).unwrap().hit_rate),
    ] {
        assert!(rate.unwrap() <= oracle.hit_rate.unwrap() + 2.0 * sigma, "{name}: {rate:?}");
    }
}

#[test]
fn mc_demand_tracks_actual_plays() {
    let spec = GeneratorSpec::table6(15, 6000, 6);
    let data = split(&generate(&spec).unwrap(), 0.9, 6).unwrap();
    let playlist = spec.playlist().unwrap();
    let train = data.sessions_in(&spec.playlist_id, Split::Train);
    let test = data.sessions_in(&spec.playlist_id, Split::Test);
    let mc = fit_markov(&train, &playlist, false, 0.0, 2).unwrap();
    for mode in [DemandMode::Realized, DemandMode::Propagated] {
        let eval = evaluate_playlist(&mc, &test, &playlist, 2, mode).unwrap();
        assert!(eval.pseudo_r2.unwrap() > 0.8, "{mode}: {:?}", eval.pseudo_r2);
    }
}
