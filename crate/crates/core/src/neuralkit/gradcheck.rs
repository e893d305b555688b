use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::params::{Grads, ParamSet};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Entries sampled from each parameter array (all entries if smaller).
    pub samples_per_param: usize,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            samples_per_param: 12,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares reverse-mode gradients against central finite differences on a
/// seeded subsample of parameter entries.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(params: &ParamSet, analytic: &Grads, loss: F, options: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    params.check_grads(analytic)?;
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at the check point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for (pi, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let picks: Vec<usize> = if len <= options.samples_per_param {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, options.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        for k in picks {
            let original = params.iter().nth(pi).expect("index").value.as_slice()[k];
            let slot = |probe: &mut ParamSet, v: f64| {
                probe.iter_mut().nth(pi).expect("index").value.as_mut_slice()[k] = v;
            };
            slot(&mut probe, original + options.step);
            let plus = loss(&probe)?;
            slot(&mut probe, original - options.step);
            let minus = loss(&probe)?;
            slot(&mut probe, original);
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::NonFinite(format!("loss while perturbing `{}`", names[pi])));
            }
            let numeric = (plus - minus) / (2.0 * options.step);
            let a = grad.as_slice()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(options.floor);
            report.entries_checked += 1;
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((names[pi].clone(), k));
            }
        }
    }
    Ok(report)
}
