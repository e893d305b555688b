use serde::{Deserialize, Serialize};

use crate::domain::{Outcome, Session};
use crate::error::{Error, Result};
use crate::predict::{predict_outcomes, SessionPredictor};

/// Correct predictions out of scored observations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCount {
    pub hits: usize,
    pub total: usize,
}

impl HitCount {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    pub fn add(&mut self, other: HitCount) {
        self.hits += other.hits;
        self.total += other.total;
    }
}

/// Exact matches between aligned predictions and actual outcomes.
pub fn hit_rate(predicted: &[Outcome], actual: &[Outcome]) -> Result<HitCount> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} outcomes",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(HitCount {
        hits: predicted.iter().zip(actual).filter(|(p, a)| p == a).count(),
        total: actual.len(),
    })
}

/// Observation-weighted mean of `(rate, observations)` pairs.
pub fn weighted_hit_rate(rates: &[(f64, usize)]) -> Option<f64> {
    let total: usize = rates.iter().map(|r| r.1).sum();
    (total > 0).then(|| rates.iter().map(|(r, w)| r * *w as f64).sum::<f64>() / total as f64)
}

/// Predicted and actual outcomes of a session from position 2 on.
pub fn score_session(predictor: &dyn SessionPredictor, session: &Session) -> Result<(Vec<Outcome>, Vec<Outcome>)> {
    let mut predicted = predict_outcomes(predictor, session)?;
    let mut actual: Vec<Outcome> = session.outcomes().collect();
    if !actual.is_empty() {
        predicted.remove(0);
        actual.remove(0);
    }
    Ok((predicted, actual))
}

/// Counts indexed `[actual][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_outcomes(predicted: &[Outcome], actual: &[Outcome]) -> Result<Self> {
        hit_rate(predicted, actual)?;
        let mut m = ConfusionMatrix::default();
        for (p, a) in predicted.iter().zip(actual) {
            m.counts[a.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for a in 0..3 {
            for p in 0..3 {
                self.counts[a][p] += other.counts[a][p];
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, actual: Outcome) -> usize {
        self.counts[actual.index()].iter().sum()
    }

    /// Row-normalized shares; rows without observations stay zero.
    pub fn rates(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (a, row) in self.counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total > 0 {
                for p in 0..3 {
                    out[a][p] = row[p] as f64 / total as f64;
                }
            }
        }
        out
    }

    /// Diagonal of [`Self::rates`] weighted by actual-class frequency, which
    /// is the overall hit rate.
    pub fn weighted_diagonal(&self) -> Option<f64> {
        let total = self.total();
        let rates = self.rates();
        (total > 0).then(|| {
            (0..3)
                .map(|a| rates[a][a] * self.counts[a].iter().sum::<usize>() as f64)
                .sum::<f64>()
                / total as f64
        })
    }
}

/// One step of an empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub rate: f64,
    pub cumulative: f64,
}

/// Empirical CDF of a list of hit rates, one step per distinct value.
pub fn hit_rate_cdf(rates: &[f64]) -> Vec<CdfPoint> {
    let mut sorted: Vec<f64> = rates.iter().copied().filter(|r| !r.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (k, &r) in sorted.iter().enumerate() {
        let cumulative = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.rate == r => last.cumulative = cumulative,
            _ => out.push(CdfPoint { rate: r, cumulative }),
        }
    }
    out
}

/// Value of a step CDF at `x`.
pub fn cdf_at(cdf: &[CdfPoint], x: f64) -> f64 {
    cdf.iter().take_while(|p| p.rate <= x).last().map_or(0.0, |p| p.cumulative)
}

/// Whether the CDF of `a` lies weakly below that of `b` everywhere, i.e.
/// `a` first-order stochastically dominates `b`.
pub fn dominates(a: &[CdfPoint], b: &[CdfPoint]) -> bool {
    a.iter()
        .chain(b)
        .all(|p| cdf_at(a, p.rate) <= cdf_at(b, p.rate) + 1e-12)
}

/// `1 - SSE/TSS`; undefined for fewer than two values or zero total
/// variation.
pub fn pseudo_r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} actual values for {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < 2 {
        return Err(Error::Undefined("pseudo R² needs at least two values".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let tss: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if tss <= 0.0 {
        return Err(Error::Undefined("pseudo R² with zero total variation".into()));
    }
    let sse: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - sse / tss)
}
