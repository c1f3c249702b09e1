//! History-only baselines: last value, mean/median variants and the
//! staged Adams percentile rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{clamp_prediction, PredictorError, PredictorKind, Result};
use crate::stats;

/// Cohort statistics the heuristics fall back on, computed from
/// development students only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicStats {
    /// Mean target over all training rows; the cold-start value.
    pub train_mean: f64,
    /// Mean of each student's first-week target.
    pub week1_mean: f64,
    /// Integer percentile → value of the first-week distribution.
    pub week1_percentiles: BTreeMap<u32, f64>,
}

impl HeuristicStats {
    /// `training_values` are all usable target values; `first_week` holds
    /// one first-week value per student.
    pub fn new(training_values: &[f64], first_week: &[f64]) -> Option<Self> {
        let train_mean = stats::mean(training_values)?;
        let week1_mean = stats::mean(first_week)?;
        let sorted = stats::sorted(first_week);
        let week1_percentiles = (1..100).map(|p| (p, stats::quantile_sorted(&sorted, p as f64 / 100.0))).collect();
        Some(Self { train_mean, week1_mean, week1_percentiles })
    }

    pub fn week1_percentile(&self, p: f64) -> f64 {
        let lo = p.floor().clamp(1.0, 99.0) as u32;
        let hi = p.ceil().clamp(1.0, 99.0) as u32;
        let (a, b) = (self.week1_percentiles[&lo], self.week1_percentiles[&hi]);
        if lo == hi {
            a
        } else {
            a + (p - lo as f64) * (b - a)
        }
    }
}

/// LAST_VALUE / MEDIAN_* / MEAN_* over the history up to the current week.
pub fn predict_heuristic(kind: PredictorKind, history: &[f64], stats: &HeuristicStats) -> f64 {
    let nonzero: Vec<f64>;
    let values = match kind {
        PredictorKind::MedianNonzero | PredictorKind::MeanNonzero => {
            nonzero = history.iter().copied().filter(|&v| v > 0.0).collect();
            &nonzero[..]
        }
        _ => history,
    };
    if values.is_empty() {
        return clamp_prediction(stats.train_mean);
    }
    let v = match kind {
        PredictorKind::LastValue => values[values.len() - 1],
        PredictorKind::MedianAll | PredictorKind::MedianNonzero => {
            stats::quantile_sorted(&stats::sorted(values), 0.5)
        }
        PredictorKind::MeanAll | PredictorKind::MeanNonzero => stats::mean(values).unwrap_or(stats.train_mean),
        other => panic!("{other} is not a simple heuristic"),
    };
    clamp_prediction(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamsConfig {
    pub percentile: f64,
    pub window: usize,
}

impl AdamsConfig {
    pub fn new(percentile: f64) -> Self {
        Self { percentile, window: 9 }
    }
}

/// Staged Adams rule. With `n` past values the forecast is: the cohort
/// first-week mean (`n = 0`); the student's first value shifted by
/// `P_p − P50` of the cohort first week (`n = 1`); the previous forecast
/// moved `p/100` of the way toward the running maximum (`n < window`); the
/// `p`-th percentile of the last `window` values otherwise.
pub fn predict_adams(cfg: &AdamsConfig, history: &[f64], stats: Option<&HeuristicStats>) -> Result<f64> {
    let stats = stats.ok_or(PredictorError::MissingDatasetStats)?;
    let p = cfg.percentile;
    let n = history.len();
    if n >= cfg.window {
        let recent = &history[n - cfg.window..];
        return Ok(clamp_prediction(stats::quantile_sorted(&stats::sorted(recent), p / 100.0)));
    }
    let mut pred = clamp_prediction(stats.week1_mean);
    if n == 0 {
        return Ok(pred);
    }
    pred = clamp_prediction(history[0] + stats.week1_percentile(p) - stats.week1_percentile(50.0));
    let mut max = history[0];
    for &v in &history[1..] {
        max = max.max(v);
        pred = clamp_prediction(pred + p / 100.0 * (max - pred));
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> HeuristicStats {
        HeuristicStats::new(&[4.0, 6.0, 8.0], &[10.0, 20.0, 30.0, 40.0, 50.0]).unwrap()
    }

    #[test]
    fn simple_heuristics() {
        let s = stats();
        assert_eq!(predict_heuristic(PredictorKind::LastValue, &[10.0, 20.0], &s), 20.0);
        assert_eq!(predict_heuristic(PredictorKind::MeanNonzero, &[0.0, 10.0, 20.0], &s), 15.0);
        assert_eq!(predict_heuristic(PredictorKind::MeanAll, &[0.0, 10.0, 20.0], &s), 10.0);
        assert_eq!(predict_heuristic(PredictorKind::MedianAll, &[0.0, 10.0, 20.0, 40.0], &s), 15.0);
        assert_eq!(predict_heuristic(PredictorKind::MedianNonzero, &[0.0, 0.0], &s), 6.0);
        assert_eq!(predict_heuristic(PredictorKind::LastValue, &[], &s), 6.0);
    }

    #[test]
    fn adams_windowed_percentile() {
        let h: Vec<f64> = (1..=9).map(|i| 10.0 * i as f64).collect();
        let s = stats();
        assert_eq!(predict_adams(&AdamsConfig::new(50.0), &h, Some(&s)).unwrap(), 50.0);
        assert!((predict_adams(&AdamsConfig::new(60.0), &h, Some(&s)).unwrap() - 58.0).abs() < 1e-12);
        // only the most recent nine count
        let mut longer = vec![1000.0];
        longer.extend(&h);
        assert_eq!(predict_adams(&AdamsConfig::new(50.0), &longer, Some(&s)).unwrap(), 50.0);
    }

    #[test]
    fn adams_cold_start_stages() {
        let s = stats();
        assert_eq!(predict_adams(&AdamsConfig::new(60.0), &[], Some(&s)).unwrap(), 30.0);
        // P50 gap is zero
        assert_eq!(predict_adams(&AdamsConfig::new(50.0), &[17.0], Some(&s)).unwrap(), 17.0);
        // P60 of 10..50 is 34, P50 is 30
        assert!((predict_adams(&AdamsConfig::new(60.0), &[17.0], Some(&s)).unwrap() - 21.0).abs() < 1e-12);
        // 21 + 0.6·(25 − 21) = 23.4
        let v = predict_adams(&AdamsConfig::new(60.0), &[17.0, 25.0], Some(&s)).unwrap();
        assert!((v - 23.4).abs() < 1e-12);
        assert_eq!(predict_adams(&AdamsConfig::new(60.0), &[1.0], None), Err(PredictorError::MissingDatasetStats));
    }

    #[test]
    fn adams_clamps_at_zero() {
        let s = HeuristicStats::new(&[1.0], &[0.0, 0.0, 0.0, 100.0]).unwrap();
        assert_eq!(predict_adams(&AdamsConfig::new(50.0), &[0.0], Some(&s)).unwrap(), 0.0);
        let s = HeuristicStats::new(&[1.0], &[0.0, 100.0]).unwrap();
        let v = predict_adams(&AdamsConfig::new(50.0), &[], Some(&s)).unwrap();
        assert_eq!(v, 50.0);
    }
}
