//! Evaluation: hit rates, per-position rates and their CDFs, confusion
//! matrices, demand rates with pseudo-R², summary statistics and report
//! files.

mod demand;
mod metrics;
mod report;
mod summary;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataio::SessionEnd;
use crate::domain::{Playlist, Session};
use crate::error::{Error, Result};
use crate::predict::SessionPredictor;

pub use demand::{actual_units, demand_rates, DemandMode, DemandRow};
pub use metrics::{
    cdf_at, dominates, hit_rate, hit_rate_cdf, pseudo_r2, score_session, weighted_hit_rate, CdfPoint,
    ConfusionMatrix, HitCount,
};
pub use report::{cdf_svg, demand_svg, format_report, write_report};
pub use summary::{format_summary, summary_statistics, PlaylistSummary};

/// Hit count at one event position (1-based; position 1 is never scored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRate {
    pub position: usize,
    pub hits: usize,
    pub total: usize,
    pub rate: f64,
}

fn position_rates(counts: &BTreeMap<usize, HitCount>) -> Vec<PositionRate> {
    counts
        .iter()
        .filter_map(|(&position, c)| {
            c.rate().map(|rate| PositionRate {
                position,
                hits: c.hits,
                total: c.total,
                rate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaylistEvaluation {
    pub playlist_id: String,
    pub sessions: usize,
    pub hits: HitCount,
    pub hit_rate: Option<f64>,
    pub positions: Vec<PositionRate>,
    pub confusion: ConfusionMatrix,
    pub confusion_rates: [[f64; 3]; 3],
    pub demand: Vec<DemandRow>,
    /// `None` when undefined (fewer than two tracks or no variation).
    pub pseudo_r2: Option<f64>,
}

/// Scores a predictor on one playlist's holdout sessions.
pub fn evaluate_playlist(
    predictor: &dyn SessionPredictor,
    sessions: &[&Session],
    playlist: &Playlist,
    cap: u32,
    mode: DemandMode,
) -> Result<PlaylistEvaluation> {
    if sessions.is_empty() {
        return Err(Error::invalid(format!(
            "no holdout sessions for playlist `{}`",
            playlist.playlist_id
        )));
    }
    let mut hits = HitCount::default();
    let mut confusion = ConfusionMatrix::default();
    let mut by_position: BTreeMap<usize, HitCount> = BTreeMap::new();
    for s in sessions {
        let (predicted, actual) = score_session(predictor, s)?;
        hits.add(hit_rate(&predicted, &actual)?);
        confusion.add(&ConfusionMatrix::from_outcomes(&predicted, &actual)?);
        for (k, (p, a)) in predicted.iter().zip(&actual).enumerate() {
            let c = by_position.entry(k + 2).or_default();
            c.total += 1;
            c.hits += usize::from(p == a);
        }
    }
    let demand = demand_rates(predictor, sessions, playlist, cap, mode)?;
    let actual: Vec<f64> = demand.iter().map(|r| r.actual).collect();
    let predicted: Vec<f64> = demand.iter().map(|r| r.predicted).collect();
    let pseudo_r2 = match pseudo_r2(&actual, &predicted) {
        Ok(r) => Some(r),
        Err(Error::Undefined(why)) => {
            warn!("playlist {}: {why}", playlist.playlist_id);
            None
        }
        Err(e) => return Err(e),
    };
    Ok(PlaylistEvaluation {
        playlist_id: playlist.playlist_id.clone(),
        sessions: sessions.len(),
        hit_rate: hits.rate(),
        hits,
        positions: position_rates(&by_position),
        confusion_rates: confusion.rates(),
        confusion,
        demand,
        pseudo_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub session_end: SessionEnd,
    pub demand_mode: DemandMode,
    pub playlists: Vec<PlaylistEvaluation>,
    pub hits: HitCount,
    /// Observation-weighted over playlists.
    pub hit_rate: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub confusion_rates: [[f64; 3]; 3],
    /// Rates per event position pooled over playlists.
    pub positions: Vec<PositionRate>,
    /// CDF of the pooled per-position rates.
    pub cdf: Vec<CdfPoint>,
}

impl EvaluationReport {
    pub fn new(model: &str, session_end: SessionEnd, demand_mode: DemandMode, playlists: Vec<PlaylistEvaluation>) -> Self {
        let mut hits = HitCount::default();
        let mut confusion = ConfusionMatrix::default();
        let mut by_position: BTreeMap<usize, HitCount> = BTreeMap::new();
        for p in &playlists {
            hits.add(p.hits);
            confusion.add(&p.confusion);
            for r in &p.positions {
                by_position.entry(r.position).or_default().add(HitCount {
                    hits: r.hits,
                    total: r.total,
                });
            }
        }
        let positions = position_rates(&by_position);
        let rates: Vec<f64> = positions.iter().map(|r| r.rate).collect();
        EvaluationReport {
            model: model.to_string(),
            session_end,
            demand_mode,
            hit_rate: hits.rate(),
            hits,
            confusion_rates: confusion.rates(),
            confusion,
            cdf: hit_rate_cdf(&rates),
            positions,
            playlists,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::fit_markov;
    use crate::dataio::{split, Split};
    use crate::synthgen::{bayes_rate, generate, GeneratorSpec};

    #[test]
    fn report_aggregates_playlists() {
        let spec = GeneratorSpec::table6(10, 600, 4);
        let data = split(&generate(&spec).unwrap(), 0.9, 1).unwrap();
        let playlist = spec.playlist().unwrap();
        let train = data.sessions_in("synthetic", Split::Train);
        let test = data.sessions_in("synthetic", Split::Test);
        let mc = fit_markov(&train, &playlist, false, 0.0, 2).unwrap();
        let eval = evaluate_playlist(&mc, &test, &playlist, 2, DemandMode::Realized).unwrap();
        let report = EvaluationReport::new("mc", SessionEnd::Full, DemandMode::Realized, vec![eval.clone(), eval]);
        let single = report.playlists[0].hit_rate.unwrap();
        assert!((report.hit_rate.unwrap() - single).abs() < 1e-12);
        assert!((report.confusion.weighted_diagonal().unwrap() - single).abs() < 1e-12);
        assert_eq!(report.positions[0].position, 2);
        assert!(report.positions.iter().all(|p| (0.0..=1.0).contains(&p.rate)));
        assert!((single - bayes_rate(&spec)).abs() < 0.06);
        assert_eq!(report.playlists[0].demand.len(), 9);
    }
}
