//! Descriptive and comparative statistics used throughout the benchmark.
//!
//! Quantiles use linear interpolation between order statistics at rank
//! `p·(n−1)`; standard deviations use the population (`n`) denominator.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("tukey k must be positive, got {0}")]
    InvalidFence(f64),
    #[error("comparator MAE is zero")]
    ZeroComparator,
    #[error("need at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate block design: {0}")]
    DegenerateBlocks(&'static str),
    #[error("invalid bootstrap config: {0}")]
    InvalidBootstrap(&'static str),
}

pub type Result<T> = std::result::Result<T, StatsError>;

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

pub fn sorted<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_by(total_cmp);
    v
}

/// Quantile of already-sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q.max(T::zero()).min(T::one()) * T::from_usize_lossy(n - 1);
    let lo = rank.floor();
    let lo_idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi_idx = (lo_idx + 1).min(n - 1);
    let frac = rank - lo;
    if frac == T::zero() {
        sorted[lo_idx]
    } else {
        sorted[lo_idx] + frac * (sorted[hi_idx] - sorted[lo_idx])
    }
}

/// Percentile with `pct ∈ [0, 100]`.
pub fn percentile<T: Scalar>(values: &[T], pct: T) -> Result<T> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(quantile_sorted(&sorted(values), pct / T::lit(100.0)))
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len()))
    }
}

pub fn population_std<T: Scalar>(values: &[T]) -> Option<T> {
    let m = mean(values)?;
    let var = values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(values.len());
    Some(var.sqrt())
}

/// Tukey fences `[Q1 − k·IQR, Q3 + k·IQR]`; `true` means the value is kept.
pub fn tukey_mask<T: Scalar>(values: &[T], k: T) -> Result<Vec<bool>> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(k > T::zero()) {
        return Err(StatsError::InvalidFence(k.to_f64_lossy()));
    }
    let s = sorted(values);
    let q1 = quantile_sorted(&s, T::lit(0.25));
    let q3 = quantile_sorted(&s, T::lit(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - k * iqr, q3 + k * iqr);
    Ok(values.iter().map(|&v| v >= lo && v <= hi).collect())
}

/// Mean absolute error over `(prediction, truth)` pairs.
pub fn mae<T: Scalar>(pairs: &[(T, T)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let total = pairs.iter().map(|&(p, y)| (p - y).abs()).sum::<T>();
    Ok(total / T::from_usize_lossy(pairs.len()))
}

/// Signed relative change in percent: `(model − comparator) / comparator · 100`.
/// Negative values mean the model has lower error.
pub fn delta_pct<T: Scalar>(mae_model: T, mae_comparator: T) -> Result<T> {
    if mae_comparator == T::zero() {
        return Err(StatsError::ZeroComparator);
    }
    Ok((mae_model - mae_comparator) / mae_comparator * T::lit(100.0))
}

/// Cliff's δ = (#{a > b} − #{a < b}) / (n·m), computed by binary search over
/// the sorted second sample.
pub fn cliffs_delta<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let sb = sorted(b);
    let mut net: i64 = 0;
    for &x in a {
        let below = sb.partition_point(|&v| v < x);
        let not_above = sb.partition_point(|&v| v <= x);
        let above = sb.len() - not_above;
        net += below as i64 - above as i64;
    }
    Ok(T::lit(net as f64) / T::lit(a.len() as f64 * b.len() as f64))
}

/// Average (fractional) ranks starting at 1; ties share their mean rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| total_cmp(&values[i], &values[j]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = T::lit((start + 1 + end) as f64 / 2.0);
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn tie_pairs<T: Scalar>(sorted_vals: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted_vals {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

fn merge_count<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's τ-b with tie correction (Knight's O(n log n) algorithm).
/// Returns 0 when either ranking is entirely tied.
pub fn kendall_tau_b<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }
    let mut pairs: Vec<(T, T)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| total_cmp(&a.0, &b.0).then_with(|| total_cmp(&a.1, &b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tie_pairs(pairs.iter().map(|p| p.0));
    // joint ties: consecutive equal (x, y)
    let mut n3 = 0u64;
    let mut run = 0u64;
    for i in 0..n {
        if i > 0 && pairs[i] == pairs[i - 1] {
            run += 1;
        } else {
            n3 += run * run.saturating_sub(1) / 2;
            run = 1;
        }
    }
    n3 += run * run.saturating_sub(1) / 2;

    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(n);
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tie_pairs(ys.iter().copied());

    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Ok(T::zero());
    }
    let numer = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(T::lit(numer / denom))
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let mx = mean(x).ok_or(StatsError::EmptyInput)?;
    let my = mean(y).ok_or(StatsError::EmptyInput)?;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(T::zero());
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub kendall_w: T,
    pub n_configs: usize,
    pub n_blocks: usize,
}

/// Friedman test over `scores[config][block]` (ranked within each block,
/// ties averaged) with the standard tie correction; Kendall's
/// `W = χ² / (n_blocks·(k − 1))`.
pub fn friedman_kendall<T: Scalar>(scores: &[Vec<T>]) -> Result<FriedmanResult<T>> {
    let k = scores.len();
    if k < 2 {
        return Err(StatsError::DegenerateBlocks("need at least 2 configurations"));
    }
    let n = scores[0].len();
    if n < 2 {
        return Err(StatsError::DegenerateBlocks("need at least 2 blocks"));
    }
    if scores.iter().any(|row| row.len() != n) {
        return Err(StatsError::DegenerateBlocks("ragged score matrix"));
    }
    let kf = k as f64;
    let nf = n as f64;
    let mut rank_sums = vec![0.0f64; k];
    let mut tie_term = 0.0f64;
    for b in 0..n {
        let column: Vec<T> = scores.iter().map(|row| row[b]).collect();
        let ranks = average_ranks(&column);
        for (j, r) in ranks.iter().enumerate() {
            rank_sums[j] += r.to_f64_lossy();
        }
        let s = sorted(&column);
        let mut i = 0;
        while i < s.len() {
            let mut e = i + 1;
            while e < s.len() && s[e] == s[i] {
                e += 1;
            }
            let t = (e - i) as f64;
            tie_term += t * t * t - t;
            i = e;
        }
    }
    let expected = nf * (kf + 1.0) / 2.0;
    let ss: f64 = rank_sums.iter().map(|r| (r - expected).powi(2)).sum();
    let denom = nf * kf * (kf + 1.0) - tie_term / (kf - 1.0);
    if denom <= 0.0 {
        return Err(StatsError::DegenerateBlocks("every block fully tied"));
    }
    let chi2 = 12.0 * ss / denom;
    let dist = ChiSquared::new(kf - 1.0).expect("k ≥ 2 gives positive degrees of freedom");
    let p = dist.sf(chi2);
    Ok(FriedmanResult {
        statistic: T::lit(chi2),
        p_value: T::lit(p),
        kendall_w: T::lit(chi2 / (nf * (kf - 1.0))),
        n_configs: k,
        n_blocks: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(StatsError::InvalidBootstrap("replicates must be ≥ 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StatsError::InvalidBootstrap("level must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Percentile bootstrap interval with a shift-method two-sided p-value for
/// the null "mean difference = 0".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval<T> {
    pub point: T,
    pub lower: T,
    pub upper: T,
    pub p_value: T,
}

impl<T: Scalar> BootstrapInterval<T> {
    pub fn excludes_zero(&self) -> bool {
        self.lower > T::zero() || self.upper < T::zero()
    }
}

/// Resamples units with replacement; each replicate uses its own ChaCha
/// stream derived from the root seed, so results do not depend on the
/// order replicates are evaluated in.
pub fn bootstrap_ci<T: Scalar>(diffs: &[T], cfg: &BootstrapConfig) -> Result<BootstrapInterval<T>> {
    let weights = vec![T::one(); diffs.len()];
    bootstrap_ci_weighted(diffs, &weights, cfg)
}

/// Weighted variant: the replicate statistic is `Σ w·d / Σ w` over the
/// resampled units. With `d` = a student's mean paired error difference and
/// `w` = that student's row count, the point estimate equals the overall
/// MAE difference.
pub fn bootstrap_ci_weighted<T: Scalar>(
    diffs: &[T],
    weights: &[T],
    cfg: &BootstrapConfig,
) -> Result<BootstrapInterval<T>> {
    cfg.validate()?;
    if diffs.len() != weights.len() {
        return Err(StatsError::LengthMismatch(diffs.len(), weights.len()));
    }
    let n = diffs.len();
    if n < 2 {
        return Err(StatsError::TooFewUnits(n));
    }
    let d: Vec<f64> = diffs.iter().map(|v| v.to_f64_lossy()).collect();
    let w: Vec<f64> = weights.iter().map(|v| v.to_f64_lossy()).collect();
    let wsum: f64 = w.iter().sum();
    let point = d.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;

    let mut stats: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..n {
                let j = rng.random_range(0..n);
                num += w[j] * d[j];
                den += w[j];
            }
            if den > 0.0 {
                num / den
            } else {
                point
            }
        })
        .collect();

    let extreme = stats
        .iter()
        .filter(|&&s| (s - point).abs() >= point.abs())
        .count();
    let p_value = (1.0 + extreme as f64) / (1.0 + cfg.replicates as f64);

    stats.sort_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - cfg.level;
    let lower = quantile_sorted(&stats, alpha / 2.0);
    let upper = quantile_sorted(&stats, 1.0 - alpha / 2.0);
    Ok(BootstrapInterval {
        point: T::lit(point),
        lower: T::lit(lower),
        upper: T::lit(upper),
        p_value: T::lit(p_value.min(1.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStats<T> {
    pub mean_diff: T,
    pub ci: BootstrapInterval<T>,
    pub cliffs_delta: T,
    pub p_value: T,
}

/// Paired comparison of per-unit errors `a` vs `b` (difference `a − b`).
pub fn compare_stats<T: Scalar>(a: &[T], b: &[T], cfg: &BootstrapConfig) -> Result<ComparisonStats<T>> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let ci = bootstrap_ci(&diffs, cfg)?;
    Ok(ComparisonStats {
        mean_diff: ci.point,
        ci,
        cliffs_delta: cliffs_delta(a, b)?,
        p_value: ci.p_value,
    })
}
