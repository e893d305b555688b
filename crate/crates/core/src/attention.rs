//! Post-hoc analysis of masked self-attention weights: average query and
//! key weights, reference profiles, harmonic closed forms and per-session
//! correlation reports.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::Session;
use crate::error::{Error, Result};
use crate::neuralkit::Matrix;
use crate::seqmodels::{AttentionTensor, NeuralPredictor};

/// Row-sum tolerance of a valid attention matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Checks that `alpha` is square, zero above the diagonal and that every
/// row sums to one.
pub fn check_attention(alpha: &Matrix) -> Result<()> {
    let n = alpha.rows();
    if alpha.cols() != n {
        return Err(Error::Shape(format!("attention matrix is {n}x{}", alpha.cols())));
    }
    for i in 0..n {
        let row = alpha.row(i);
        if let Some(j) = row[i + 1..].iter().position(|&v| v != 0.0) {
            return Err(Error::invalid(format!(
                "attention row {} puts weight on later position {}",
                i + 1,
                i + j + 2
            )));
        }
        if row.iter().any(|&v| !(0.0..=1.0 + ROW_SUM_TOL).contains(&v)) {
            return Err(Error::invalid(format!("attention row {} has a weight outside [0, 1]", i + 1)));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!("attention row {} sums to {sum}", i + 1)));
        }
    }
    Ok(())
}

/// Mean weight per query row, `(1/i) Σ_{j≤i} α_ij`, which is `1/i` for every
/// valid matrix.
pub fn average_query_weights(alpha: &Matrix) -> Result<Vec<f64>> {
    check_attention(alpha)?;
    Ok((0..alpha.rows())
        .map(|i| alpha.row(i)[..=i].iter().sum::<f64>() / (i + 1) as f64)
        .collect())
}

/// Mean non-masked weight per key column, `(1/(n+1-j)) Σ_{i≥j} α_ij`.
pub fn average_key_weights(alpha: &Matrix) -> Result<Vec<f64>> {
    let n = alpha.rows();
    if alpha.cols() != n {
        return Err(Error::Shape(format!("attention matrix is {n}x{}", alpha.cols())));
    }
    Ok((0..n)
        .map(|j| (j..n).map(|i| alpha.get(i, j)).sum::<f64>() / (n - j) as f64)
        .collect())
}

/// Reference attention patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    /// Every position attends only to itself.
    SelfOnly = 1,
    /// Every position attends only to the first position.
    FirstOnly = 2,
    /// Every position attends equally to itself and all earlier positions.
    Uniform = 3,
}

impl TryFrom<u8> for Baseline {
    type Error = Error;

    fn try_from(kind: u8) -> Result<Self> {
        match kind {
            1 => Ok(Baseline::SelfOnly),
            2 => Ok(Baseline::FirstOnly),
            3 => Ok(Baseline::Uniform),
            _ => Err(Error::invalid(format!("baseline must be 1, 2 or 3, got {kind}"))),
        }
    }
}

pub fn baseline_matrix(kind: Baseline, n: usize) -> Matrix {
    let mut alpha = Matrix::zeros(n, n);
    for i in 0..n {
        match kind {
            Baseline::SelfOnly => alpha.set(i, i, 1.0),
            Baseline::FirstOnly => alpha.set(i, 0, 1.0),
            Baseline::Uniform => alpha.row_mut(i)[..=i].fill(1.0 / (i + 1) as f64),
        }
    }
    alpha
}

/// Closed-form average key weights of a baseline, `j = 1..=n`.
pub fn baseline_key_weights(kind: Baseline, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| match kind {
            Baseline::SelfOnly => 1.0 / (n - j + 1) as f64,
            Baseline::FirstOnly => f64::from(u8::from(j == 1)),
            Baseline::Uniform => (j..=n).map(|k| 1.0 / k as f64).sum::<f64>() / (n - j + 1) as f64,
        })
        .collect()
}

/// Uniform-baseline key weights against their logarithmic approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCheck {
    pub n: usize,
    pub exact: Vec<f64>,
    pub approx: Vec<f64>,
    /// `|exact - approx|` per position.
    pub deviation: Vec<f64>,
    /// Largest deviation allowed by the harmonic remainder at each position.
    pub bound: Vec<f64>,
}

impl HarmonicCheck {
    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }

    pub fn within_bounds(&self) -> bool {
        self.deviation.iter().zip(&self.bound).all(|(d, b)| d <= b)
    }
}

/// `H_k ≈ ln k + γ + 1/(2k)`, which exceeds `H_k` by at most `1/(8k²)`.
fn harmonic_approx(k: usize) -> f64 {
    let k = k as f64;
    k.ln() + EULER_GAMMA + 0.5 / k
}

/// Compares the exact uniform-baseline key weights with
/// `(H_n - H_{j-1}) / (n-j+1)` evaluated through the logarithmic
/// approximation of both harmonic numbers. At `j = 1` only `H_n` is
/// approximated, so the error is at most `1/(8n²)/n`; for `j ≥ 2` the two
/// remainders partly cancel and the error is at most `1/(8(j-1)²)/(n-j+1)`.
pub fn harmonic_approx_check(n: usize) -> Result<HarmonicCheck> {
    if n < 2 {
        return Err(Error::invalid("the harmonic check needs n >= 2"));
    }
    let exact = baseline_key_weights(Baseline::Uniform, n);
    let mut approx = Vec::with_capacity(n);
    let mut bound = Vec::with_capacity(n);
    for j in 1..=n {
        let width = (n - j + 1) as f64;
        let head = if j == 1 { 0.0 } else { harmonic_approx(j - 1) };
        approx.push((harmonic_approx(n) - head) / width);
        let k = if j == 1 { n } else { j - 1 } as f64;
        // Slack for the rounding of the exact sum.
        bound.push(1.0 / (8.0 * k * k) / width + 1e-14);
    }
    let deviation = exact.iter().zip(&approx).map(|(e, a)| (e - a).abs()).collect();
    Ok(HarmonicCheck {
        n,
        exact,
        approx,
        deviation,
        bound,
    })
}

/// Elementwise mean of every head of every layer, each validated first.
pub fn mean_attention(tensor: &AttentionTensor) -> Result<Matrix> {
    let mut total: Option<Matrix> = None;
    let mut count = 0usize;
    for head in tensor.iter().flatten() {
        check_attention(head)?;
        match &mut total {
            None => total = Some(head.clone()),
            Some(t) if t.same_shape(head) => t.add_assign(head),
            Some(t) => {
                return Err(Error::Shape(format!(
                    "attention heads of shapes {:?} and {:?}",
                    t.shape(),
                    head.shape()
                )))
            }
        }
        count += 1;
    }
    let mut mean = total.ok_or_else(|| Error::invalid("attention tensor has no heads"))?;
    mean.scale(1.0 / count as f64);
    Ok(mean)
}

/// Pearson correlation. Zero variance in either input is undefined.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation needs two series of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= f64::EPSILON * ma.abs().max(1.0) * n || sbb <= f64::EPSILON * mb.abs().max(1.0) * n {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Shortest session whose profile is correlated with the baseline.
pub const MIN_PROFILE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionProfile {
    pub session_id: String,
    /// Average key weights of the head- and layer-averaged attention.
    pub empirical: Vec<f64>,
    pub baseline: Vec<f64>,
    /// `None` when the empirical profile is constant.
    pub correlation: Option<f64>,
}

/// Profile of one attention tensor, or `None` for fewer than three positions.
pub fn profile_from_tensor(session_id: &str, tensor: &AttentionTensor) -> Result<Option<SessionProfile>> {
    let mean = mean_attention(tensor)?;
    let n = mean.rows();
    if n < MIN_PROFILE_LEN {
        return Ok(None);
    }
    let empirical = average_key_weights(&mean)?;
    let baseline = baseline_key_weights(Baseline::Uniform, n);
    let correlation = match pearson(&empirical, &baseline) {
        Ok(r) => Some(r),
        Err(Error::Undefined(_)) => {
            warn!("session {session_id}: constant attention profile, correlation undefined");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Some(SessionProfile {
        session_id: session_id.to_string(),
        empirical,
        baseline,
        correlation,
    }))
}

/// Attention profile of a session under a trained Transformer, using the
/// causal forward pass over the session's events.
pub fn session_attention_profile(model: &NeuralPredictor, session: &Session) -> Result<Option<SessionProfile>> {
    let x = model.input(session, session.len());
    let tensor = model.model.attention(&x)?;
    profile_from_tensor(&session.session_id, &tensor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaylistProfile {
    pub playlist_id: String,
    pub sessions: Vec<SessionProfile>,
    /// Sessions shorter than [`MIN_PROFILE_LEN`].
    pub excluded: usize,
    /// Sessions with a constant profile.
    pub undefined: usize,
    /// Mean of the defined per-session correlations.
    pub mean_correlation: Option<f64>,
}

pub fn playlist_profile(playlist_id: &str, profiles: Vec<Option<SessionProfile>>) -> PlaylistProfile {
    let excluded = profiles.iter().filter(|p| p.is_none()).count();
    let sessions: Vec<SessionProfile> = profiles.into_iter().flatten().collect();
    let defined: Vec<f64> = sessions.iter().filter_map(|s| s.correlation).collect();
    PlaylistProfile {
        playlist_id: playlist_id.to_string(),
        undefined: sessions.len() - defined.len(),
        excluded,
        mean_correlation: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        sessions,
    }
}

pub fn playlist_attention_profile(model: &NeuralPredictor, sessions: &[&Session]) -> Result<PlaylistProfile> {
    let profiles = sessions
        .iter()
        .map(|s| session_attention_profile(model, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(playlist_profile(&model.playlist.playlist_id, profiles))
}

/// Writes `playlist_id,session_id,j,empirical,baseline3,correlation`, one
/// row per session position; `correlation` is empty when undefined.
pub fn write_profiles_csv(path: &Path, playlists: &[PlaylistProfile]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["playlist_id", "session_id", "j", "empirical", "baseline3", "correlation"])?;
    for p in playlists {
        for s in &p.sessions {
            let corr = s.correlation.map(|c| c.to_string()).unwrap_or_default();
            for (j, (e, b)) in s.empirical.iter().zip(&s.baseline).enumerate() {
                w.write_record([
                    p.playlist_id.as_str(),
                    s.session_id.as_str(),
                    &(j + 1).to_string(),
                    &e.to_string(),
                    &b.to_string(),
                    &corr,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One line per playlist: id, sessions used, mean correlation.
pub fn format_profile_table(playlists: &[PlaylistProfile]) -> String {
    let width = playlists.iter().map(|p| p.playlist_id.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<width$}  {:>8}  {:>11}\n", "playlist", "sessions", "correlation");
    for p in playlists {
        let corr = p.mean_correlation.map_or("undefined".to_string(), |c| format!("{c:.3}"));
        out += &format!("{:<width$}  {:>8}  {:>11}\n", p.playlist_id, p.sessions.len(), corr);
    }
    out
}
