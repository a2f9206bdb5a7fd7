//! Cross-checks the bootstrap against a second resampler built on a different
//! generator and a histogram percentile, and against exact binomial quantiles.

use tutor_moves::stats::bootstrap_ci;

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Float-scaled index; a different mapping from the library's.
    fn index(&mut self, n: usize) -> usize {
        let u = (self.next() >> 11) as f64 / (1u64 << 53) as f64;
        ((u * n as f64) as usize).min(n - 1)
    }
}

/// Resample counts tallied into a histogram; bounds read off its running sum.
fn oracle_ci(correct: &[bool], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = correct.len();
    let mut rng = SplitMix64(seed);
    let mut hist = vec![0usize; n + 1];
    for _ in 0..resamples {
        let hits = (0..n).filter(|_| correct[rng.index(n)]).count();
        hist[hits] += 1;
    }
    // exact nearest rank ceil(p * N), with p in millionths
    let tail = ((1.0 - level) / 2.0 * 1e6).round() as usize;
    let quantile = |p: usize| {
        let need = (p * resamples).div_ceil(1_000_000).max(1);
        let mut cum = 0;
        for (c, &h) in hist.iter().enumerate() {
            cum += h;
            if cum >= need {
                return c as f64 / n as f64;
            }
        }
        1.0
    };
    (quantile(tail), quantile(1_000_000 - tail))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let lg = |x: u64| (1..=x).map(|i| (i as f64).ln()).sum::<f64>();
    lg(n) - lg(k) - lg(n - k)
}

/// Exact quantiles of Binomial(n, k/n) / n, the limit of the percentile
/// bootstrap as resamples grow.
fn binomial_ci(k: u64, n: u64, level: f64) -> (f64, f64) {
    let p = k as f64 / n as f64;
    let pmf = |c: u64| {
        if p == 0.0 {
            return if c == 0 { 1.0 } else { 0.0 };
        }
        if p == 1.0 {
            return if c == n { 1.0 } else { 0.0 };
        }
        (ln_choose(n, c) + c as f64 * p.ln() + (n - c) as f64 * (1.0 - p).ln()).exp()
    };
    let tail = (1.0 - level) / 2.0;
    let q = |target: f64| {
        let mut cum = 0.0;
        for c in 0..=n {
            cum += pmf(c);
            if cum >= target - 1e-12 {
                return c as f64 / n as f64;
            }
        }
        1.0
    };
    (q(tail), q(1.0 - tail))
}

fn binomial_cdf(k: u64, n: u64, c: u64) -> f64 {
    let p = k as f64 / n as f64;
    (0..=c)
        .map(|i| (ln_choose(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp())
        .sum()
}

fn vector(k: usize, n: usize) -> Vec<bool> {
    // spread the hits so the oracle cannot lean on ordering
    (0..n).map(|i| (i * 7 % n) < k).collect()
}

#[test]
fn matches_independent_resampler_at_reported_scores() {
    for k in [38, 45, 49, 50] {
        let v = vector(k, 50);
        let ci = bootstrap_ci(&v, 10_000, 0.95, 42).unwrap();
        let (lo, hi) = oracle_ci(&v, 10_000, 0.95, 0xDEC0DE);
        assert!(
            (ci.lower - lo).abs() <= 0.01,
            "k={k}: lower {} vs oracle {lo}",
            ci.lower
        );
        assert!(
            (ci.upper - hi).abs() <= 0.01,
            "k={k}: upper {} vs oracle {hi}",
            ci.upper
        );
    }
}

#[test]
fn close_to_exact_binomial_quantiles_for_every_score() {
    for k in 0..=50u64 {
        let v = vector(k as usize, 50);
        let ci = bootstrap_ci(&v, 10_000, 0.95, 42).unwrap();
        let (lo, hi) = binomial_ci(k, 50, 0.95);
        // one grid step of Monte Carlo slack where the exact cdf sits on a cutoff
        assert!(
            (ci.lower - lo).abs() <= 0.02 + 1e-9,
            "k={k}: lower {} vs exact {lo}",
            ci.lower
        );
        assert!(
            (ci.upper - hi).abs() <= 0.02 + 1e-9,
            "k={k}: upper {} vs exact {hi}",
            ci.upper
        );
    }
}

#[test]
fn disagreement_census() {
    // every score 0..=50 against the oracle; printed for the record
    let mut off = Vec::new();
    for k in 0..=50 {
        let v = vector(k, 50);
        let ci = bootstrap_ci(&v, 10_000, 0.95, 42).unwrap();
        let (lo, hi) = oracle_ci(&v, 10_000, 0.95, 0xDEC0DE);
        if (ci.lower - lo).abs() > 0.01 || (ci.upper - hi).abs() > 0.01 {
            off.push((k, ci.lower, lo, ci.upper, hi));
        }
    }
    println!("scores where the two resamplers differ: {off:?}");
    // any disagreement must sit where the exact cdf is within Monte Carlo
    // noise (about 4 sd at 10,000 draws) of the percentile cutoff
    for (k, lo_a, lo_b, hi_a, hi_b) in off {
        for (a, b, cutoff) in [(lo_a, lo_b, 0.025), (hi_a, hi_b, 0.975)] {
            if (a - b).abs() > 0.01 {
                let c = (a.min(b) * 50.0).round() as u64;
                let cdf = binomial_cdf(k as u64, 50, c);
                assert!(
                    (cdf - cutoff).abs() < 0.0065,
                    "k={k}: cdf({c}) = {cdf} is far from {cutoff}"
                );
            }
        }
    }
}

#[test]
fn table_scores_land_on_expected_bounds() {
    let praise = bootstrap_ci(&vector(49, 50), 10_000, 0.95, 42).unwrap();
    assert_eq!((praise.lower, praise.upper), (0.94, 1.0));
    let errors = bootstrap_ci(&vector(38, 50), 10_000, 0.95, 42).unwrap();
    assert_eq!(errors.lower, 0.64);
    assert!(
        errors.upper == 0.86 || errors.upper == 0.88,
        "{}",
        errors.upper
    );
}
