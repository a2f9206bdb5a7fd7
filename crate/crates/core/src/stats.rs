//! Agreement statistics, percentile bootstrap intervals and a simulated
//! at-chance baseline.
//!
//! All randomness comes from ChaCha20 ([`rand_chacha::ChaCha20Rng`]) seeded
//! with `seed_from_u64`, and bounded integers are drawn with Lemire's
//! widening-multiply method with rejection ([`uniform_index`]). Both are
//! fixed algorithms, so a given seed produces the same intervals on every
//! platform.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::label::{Answer, Stage};

pub const DEFAULT_RESAMPLES: u32 = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub percent_agreement: f64,
    pub kappa: f64,
    pub n_items: usize,
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Contract(format!(
            "rating vectors must be non-empty and of equal length (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Fraction of positions where the two raters agree.
pub fn percent_agreement<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    check_pair(a, b)?;
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(matches as f64 / a.len() as f64)
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`, with `p_e` the sum over
/// categories of the product of the two raters' marginal proportions.
///
/// When both raters use one and the same category throughout, `p_e = 1` and
/// kappa is defined as 1.
pub fn cohen_kappa<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let p_o = percent_agreement(a, b)?;

    let mut categories: Vec<&T> = Vec::new();
    for x in a.iter().chain(b) {
        if !categories.contains(&x) {
            categories.push(x);
        }
    }
    let p_e: f64 = categories
        .iter()
        .map(|c| {
            let pa = a.iter().filter(|x| x == c).count() as f64 / n;
            let pb = b.iter().filter(|x| x == c).count() as f64 / n;
            pa * pb
        })
        .sum();

    if (1.0 - p_e).abs() < 1e-12 {
        return if p_o == 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Contract(
                "kappa undefined for degenerate marginals".into(),
            ))
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub fn agreement<T: PartialEq>(a: &[T], b: &[T]) -> Result<AgreementResult> {
    Ok(AgreementResult {
        percent_agreement: percent_agreement(a, b)?,
        kappa: cohen_kappa(a, b)?,
        n_items: a.len(),
    })
}

/// A point estimate with its percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_items: usize,
    pub n_resamples: u32,
    pub level: f64,
    pub seed: u64,
}

/// Unbiased integer in `0..n` (Lemire's method).
pub fn uniform_index<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "empty range");
    let mut m = u128::from(rng.next_u64()) * u128::from(n);
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = u128::from(rng.next_u64()) * u128::from(n);
        }
    }
    (m >> 64) as u64
}

/// 1-based nearest rank `ceil(p * n)`, clamped to `1..=n`.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    // tolerance keeps e.g. 0.025 * 10_000 from rounding up to 251
    let r = (p * n as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(n)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "confidence level must be in (0, 1), got {level}"
        )))
    }
}

/// Lower and upper nearest-rank percentiles of an ascending slice.
fn percentile_bounds<T: Copy>(sorted: &[T], level: f64) -> (T, T) {
    let tail = (1.0 - level) / 2.0;
    let lo = sorted[nearest_rank(tail, sorted.len()) - 1];
    let hi = sorted[nearest_rank(1.0 - tail, sorted.len()) - 1];
    (lo, hi)
}

/// Percentile bootstrap interval for the accuracy of a correctness vector.
///
/// Draws `n_resamples` resamples of `correct.len()` items with replacement
/// and takes nearest-rank percentiles of the resample means.
pub fn bootstrap_ci(
    correct: &[bool],
    n_resamples: u32,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI> {
    if correct.is_empty() {
        return Err(Error::Contract("bootstrap needs a non-empty vector".into()));
    }
    if n_resamples == 0 {
        return Err(Error::Contract("n_resamples must be at least 1".into()));
    }
    check_level(level)?;

    let n = correct.len();
    let hits = correct.iter().filter(|&&c| c).count();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut counts: Vec<usize> = (0..n_resamples)
        .map(|_| {
            (0..n)
                .filter(|_| correct[uniform_index(&mut rng, n as u64) as usize])
                .count()
        })
        .collect();
    counts.sort_unstable();
    let (lo, hi) = percentile_bounds(&counts, level);
    Ok(BootstrapCI {
        point: hits as f64 / n as f64,
        lower: lo as f64 / n as f64,
        upper: hi as f64 / n as f64,
        n_items: n,
        n_resamples,
        level,
        seed,
    })
}

/// Accuracy of a predictor that answers uniformly at random, simulated
/// `n_trials` times and scored like a model.
///
/// Filter: a random yes/no per labelled transcript. Evaluation: for each
/// transcript whose human filter is yes, a random filter answer, and when
/// that is yes a random evaluation answer; it is correct only if both the
/// filter is yes and the evaluation matches. The point is the mean trial
/// accuracy and the bounds are nearest-rank percentiles of the trial
/// accuracies.
pub fn chance_baseline(
    labels: &LabelSet,
    skill: &str,
    kind: Stage,
    n_trials: u32,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI> {
    check_level(level)?;
    if n_trials == 0 {
        return Err(Error::Contract("n_trials must be at least 1".into()));
    }
    let items: Vec<(Answer, Option<Answer>)> = labels
        .for_skill(skill)
        .map(|(_, l)| (l.filter, l.evaluation))
        .filter(|(f, _)| kind == Stage::Filter || *f == Answer::Yes)
        .collect();
    if items.is_empty() {
        return Err(Error::Contract(format!(
            "no {kind} items for skill `{skill}` to score against"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut coin = move || Answer::from_bool(uniform_index(&mut rng, 2) == 1);
    let n = items.len() as f64;
    let mut accuracies: Vec<f64> = (0..n_trials)
        .map(|_| {
            let hits = items
                .iter()
                .filter(|(filter, eval)| match kind {
                    Stage::Filter => coin() == *filter,
                    Stage::Evaluation => coin() == Answer::Yes && Some(coin()) == *eval,
                })
                .count();
            hits as f64 / n
        })
        .collect();
    let point = accuracies.iter().sum::<f64>() / f64::from(n_trials);
    accuracies.sort_by(f64::total_cmp);
    let (lower, upper) = percentile_bounds(&accuracies, level);
    Ok(BootstrapCI {
        point,
        lower,
        upper,
        n_items: items.len(),
        n_resamples: n_trials,
        level,
        seed,
    })
}
