//! Synthetic cohorts with known ground truth.
//!
//! Each student gets a weekly minutes series (regime curve × personal scale
//! × AR(1) log-noise, with zero-minute gap weeks), which is cut into
//! single-skill practice steps whose correctness is drawn from a true AFM.
//! Skills are released on a class-wide curriculum schedule and practiced in
//! order until truly proficient.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{InteractionEvent, Outcome};
use crate::scalar::sigmoid;
use crate::week::WeekId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid synth config: {0}")]
pub struct InvalidConfig(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EffortRegime {
    /// Linear ramp from `start_fraction` of the plateau over `ramp_weeks`.
    SurgePlateau { ramp_weeks: usize, start_fraction: f64 },
    /// Linear decline to `end_fraction` of the initial level.
    Decline { end_fraction: f64 },
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SkillRegime {
    /// Skills released per week rise linearly to `peak_rate` at `peak_week`
    /// (1-based) and fall linearly to `end_rate` at the last week.
    RiseThenDecline { start_rate: f64, peak_rate: f64, peak_week: usize, end_rate: f64 },
    Stationary { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeConfig {
    pub n_students: usize,
    pub n_weeks: usize,
    pub n_skills: usize,
    pub start_week: WeekId,
    pub effort: EffortRegime,
    pub skill: SkillRegime,
    /// Plateau of the class effort curve, minutes per week.
    pub plateau_minutes: f64,
    /// Log-scale sd of the per-student effort multiplier.
    pub student_scale_sd: f64,
    /// Stationary sd of the AR(1) log-noise.
    pub noise_sd: f64,
    pub noise_ar: f64,
    /// Gap probability after an active week and after a gap week.
    pub gap_prob: f64,
    pub gap_repeat_prob: f64,
    pub minutes_per_opportunity: f64,
    pub max_weekly_minutes: f64,
    /// True proficiency at which a student moves on to the next skill.
    pub practice_until: f64,
    /// Log-scale sd of the per-student curriculum pace.
    pub pace_sd: f64,
    pub theta_sd: f64,
    pub beta_mean: f64,
    /// Skills are released in units of `unit_size`; β* = unit effect
    /// (sd `unit_sd`) + skill effect (sd `beta_sd`).
    pub unit_size: usize,
    pub unit_sd: f64,
    pub beta_sd: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub seed: u64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            n_students: 425,
            n_weeks: 39,
            n_skills: 150,
            start_week: WeekId { iso_year: 2010, iso_week: 36 },
            effort: EffortRegime::SurgePlateau { ramp_weeks: 6, start_fraction: 0.3 },
            skill: SkillRegime::RiseThenDecline { start_rate: 1.0, peak_rate: 4.0, peak_week: 12, end_rate: 0.3 },
            plateau_minutes: 50.0,
            student_scale_sd: 0.45,
            noise_sd: 0.35,
            noise_ar: 0.7,
            gap_prob: 0.1,
            gap_repeat_prob: 0.1,
            minutes_per_opportunity: 2.0,
            max_weekly_minutes: 1200.0,
            practice_until: 0.99,
            pace_sd: 0.2,
            theta_sd: 0.8,
            beta_mean: 2.0,
            unit_size: 6,
            unit_sd: 1.0,
            beta_sd: 0.3,
            gamma_min: 0.2,
            gamma_max: 0.5,
            seed: 20_240_611,
        }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: &str| Err(InvalidConfig(m.to_string()));
        if self.n_students == 0 || self.n_weeks == 0 || self.n_skills == 0 || self.unit_size == 0 {
            return bad("counts must be positive");
        }
        for p in [self.gap_prob, self.gap_repeat_prob, self.practice_until] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(-1.0 < self.noise_ar && self.noise_ar < 1.0) {
            return bad("noise_ar must lie in (-1, 1)");
        }
        let nonneg = [
            self.plateau_minutes,
            self.student_scale_sd,
            self.noise_sd,
            self.pace_sd,
            self.theta_sd,
            self.beta_sd,
            self.unit_sd,
            self.gamma_min,
        ];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("scales must be finite and ≥ 0");
        }
        if !(self.gamma_max >= self.gamma_min) {
            return bad("gamma_max must be ≥ gamma_min");
        }
        if !(self.minutes_per_opportunity > 0.0) || !(self.max_weekly_minutes > 0.0) {
            return bad("minutes_per_opportunity and max_weekly_minutes must be > 0");
        }
        if let EffortRegime::SurgePlateau { ramp_weeks, start_fraction } = self.effort {
            if ramp_weeks == 0 || !(start_fraction >= 0.0) {
                return bad("surge ramp needs ramp_weeks ≥ 1 and start_fraction ≥ 0");
            }
        }
        Ok(())
    }

    /// Class effort curve, minutes per week.
    pub fn effort_curve(&self) -> Vec<f64> {
        let n = self.n_weeks;
        (0..n)
            .map(|w| {
                let f = match self.effort {
                    EffortRegime::SurgePlateau { ramp_weeks, start_fraction } => {
                        if w + 1 >= ramp_weeks {
                            1.0
                        } else {
                            start_fraction + (1.0 - start_fraction) * w as f64 / (ramp_weeks - 1).max(1) as f64
                        }
                    }
                    EffortRegime::Decline { end_fraction } => {
                        1.0 + (end_fraction - 1.0) * w as f64 / (n - 1).max(1) as f64
                    }
                    EffortRegime::Stationary => 1.0,
                };
                self.plateau_minutes * f
            })
            .collect()
    }

    /// Class curriculum release rate, skills per week.
    pub fn skill_curve(&self) -> Vec<f64> {
        let n = self.n_weeks;
        (0..n)
            .map(|w| match self.skill {
                SkillRegime::Stationary { rate } => rate,
                SkillRegime::RiseThenDecline { start_rate, peak_rate, peak_week, end_rate } => {
                    let peak = peak_week.clamp(1, n) - 1;
                    if w <= peak {
                        start_rate + (peak_rate - start_rate) * w as f64 / peak.max(1) as f64
                    } else {
                        peak_rate + (end_rate - peak_rate) * (w - peak) as f64 / (n - 1 - peak).max(1) as f64
                    }
                }
            })
            .collect()
    }
}

/// Latent record behind a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: RegimeConfig,
    pub theta: BTreeMap<String, f64>,
    pub beta: BTreeMap<String, f64>,
    pub gamma: BTreeMap<String, f64>,
    pub effort_curve: Vec<f64>,
    pub skill_curve: Vec<f64>,
    /// Student → minutes for each of the `n_weeks` weeks.
    pub weekly_minutes: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub events: Vec<InteractionEvent>,
    pub truth: SynthTruth,
}

pub fn student_id(i: usize) -> String {
    format!("S{i:04}")
}

pub fn skill_id(k: usize) -> String {
    format!("KC{k:03}")
}

pub fn generate(cfg: &RegimeConfig) -> Result<Cohort, InvalidConfig> {
    cfg.validate()?;
    let mut global = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit_dist = Normal::new(cfg.beta_mean, cfg.unit_sd).map_err(|e| InvalidConfig(e.to_string()))?;
    let units: Vec<f64> = (0..cfg.n_skills.div_ceil(cfg.unit_size)).map(|_| unit_dist.sample(&mut global)).collect();
    let beta: Vec<f64> = (0..cfg.n_skills).map(|k| units[k / cfg.unit_size] + cfg.beta_sd * normal(&mut global)).collect();
    let gamma: Vec<f64> = (0..cfg.n_skills)
        .map(|_| if cfg.gamma_max > cfg.gamma_min { global.random_range(cfg.gamma_min..cfg.gamma_max) } else { cfg.gamma_min })
        .collect();
    let effort = cfg.effort_curve();
    let pace = cfg.skill_curve();

    let mut events = Vec::new();
    let mut theta = BTreeMap::new();
    let mut weekly_minutes = BTreeMap::new();
    for i in 0..cfg.n_students {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let sid = student_id(i);
        let (th, minutes) = simulate_student(cfg, &sid, &effort, &pace, &beta, &gamma, &mut rng, &mut events);
        theta.insert(sid.clone(), th);
        weekly_minutes.insert(sid, minutes);
    }
    let truth = SynthTruth {
        config: cfg.clone(),
        theta,
        beta: (0..cfg.n_skills).map(|k| (skill_id(k), beta[k])).collect(),
        gamma: (0..cfg.n_skills).map(|k| (skill_id(k), gamma[k])).collect(),
        effort_curve: effort,
        skill_curve: pace,
        weekly_minutes,
    };
    Ok(Cohort { events, truth })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[allow(clippy::too_many_arguments)]
fn simulate_student(
    cfg: &RegimeConfig,
    sid: &str,
    effort: &[f64],
    pace: &[f64],
    beta: &[f64],
    gamma: &[f64],
    rng: &mut ChaCha8Rng,
    out: &mut Vec<InteractionEvent>,
) -> (f64, Vec<f64>) {
    let theta = cfg.theta_sd * normal(rng);
    let sd = cfg.student_scale_sd;
    let scale = (sd * normal(rng) - 0.5 * sd * sd).exp();
    let pace_mult = (cfg.pace_sd * normal(rng)).exp();
    let innov = cfg.noise_sd * (1.0 - cfg.noise_ar * cfg.noise_ar).sqrt();
    let mut noise = cfg.noise_sd * normal(rng);

    let n = cfg.n_weeks;
    let mut minutes = vec![0.0; n];
    let mut prev_gap = false;
    for w in 0..n {
        if w > 0 {
            noise = cfg.noise_ar * noise + innov * normal(rng);
        }
        let p_gap = if prev_gap { cfg.gap_repeat_prob } else { cfg.gap_prob };
        // interior weeks only, so every student spans the full calendar
        let gap = w > 0 && w + 1 < n && rng.random::<f64>() < p_gap;
        prev_gap = gap;
        if !gap {
            let m = effort[w] * scale * (noise - 0.5 * cfg.noise_sd * cfg.noise_sd).exp();
            minutes[w] = m.min(cfg.max_weekly_minutes);
        }
    }

    let mut opportunities = vec![0u32; cfg.n_skills];
    let mut released = 0.0;
    let mut problem = 0u32;
    let mut steps_left = 0u32;
    let mut problem_skill = 0usize;
    for w in 0..n {
        released += pace[w] * pace_mult;
        let available = (released.floor() as usize).clamp(1, cfg.n_skills);
        if minutes[w] <= 0.0 {
            continue;
        }
        let count = ((minutes[w] / cfg.minutes_per_opportunity).round() as usize).max(1);
        let weights: Vec<f64> = (0..count).map(|_| Exp1.sample(rng)).collect();
        let total_w: f64 = weights.iter().sum();
        let week = cfg.start_week.offset(w as i64);
        let mut stamps = session_starts(week, count, minutes[w], rng);
        let mut clock = stamps.remove(0);
        let per_session = count.div_ceil(stamps.len() + 1);
        for (e, wt) in weights.iter().enumerate() {
            if e > 0 && e % per_session == 0 && !stamps.is_empty() {
                clock = stamps.remove(0);
            }
            let seconds = minutes[w] * 60.0 * wt / total_w;
            if steps_left == 0 {
                problem += 1;
                steps_left = rng.random_range(1..=4);
                problem_skill = pick_skill(theta, beta, gamma, &opportunities, available, cfg.practice_until, rng);
            }
            steps_left -= 1;
            let k = problem_skill;
            let p = sigmoid(theta + beta[k] + gamma[k] * opportunities[k] as f64);
            let outcome = if rng.random::<f64>() < p {
                Outcome::Correct
            } else if rng.random::<bool>() {
                Outcome::Incorrect
            } else {
                Outcome::Hint
            };
            opportunities[k] += 1;
            out.push(InteractionEvent {
                student_id: sid.to_string(),
                timestamp: clock,
                duration_seconds: seconds,
                outcome,
                kc_ids: vec![skill_id(k)],
                opportunity: Some(opportunities[k]),
                problem_id: format!("{sid}-P{problem:05}"),
            });
            clock += Duration::milliseconds((seconds * 1000.0).round() as i64);
        }
    }
    (theta, minutes)
}

/// Earliest released skill not yet truly proficient; review of a random
/// released skill once all are.
fn pick_skill(
    theta: f64,
    beta: &[f64],
    gamma: &[f64],
    opp: &[u32],
    available: usize,
    until: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    (0..available)
        .find(|&k| sigmoid(theta + beta[k] + gamma[k] * opp[k] as f64) < until)
        .unwrap_or_else(|| rng.random_range(0..available))
}

/// Session start times inside the week, one session per ~2 hours of work,
/// on distinct days, so events never spill into the next week.
fn session_starts(week: WeekId, count: usize, minutes: f64, rng: &mut ChaCha8Rng) -> Vec<chrono::DateTime<Utc>> {
    let sessions = ((minutes / 120.0).ceil() as usize).clamp(1, 7).min(count);
    let mut days: Vec<i64> = (0..7).collect();
    for i in 0..sessions {
        let j = rng.random_range(i..7);
        days.swap(i, j);
    }
    let mut picked = days[..sessions].to_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|d| {
            let date = week.monday() + Duration::days(d);
            let start = NaiveTime::from_hms_opt(rng.random_range(7..13), rng.random_range(0..60), 0).expect("valid time");
            Utc.from_utc_datetime(&date.and_time(start))
        })
        .collect()
}

/// Interleaved practice for AFM recovery: every student practices every
/// skill `opportunities` times, with the true model generating correctness.
#[derive(Debug, Clone)]
pub struct AfmRecovery {
    pub events: Vec<InteractionEvent>,
    pub theta: BTreeMap<String, f64>,
    pub beta: BTreeMap<String, f64>,
    pub gamma: BTreeMap<String, f64>,
}

pub fn afm_recovery_data(
    n_students: usize,
    n_skills: usize,
    opportunities: usize,
    gamma_range: (f64, f64),
    seed: u64,
) -> AfmRecovery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_students).map(|_| 0.8 * normal(&mut rng)).collect();
    let beta: Vec<f64> = (0..n_skills).map(|_| 0.7 * normal(&mut rng) - 0.5).collect();
    let gamma: Vec<f64> = (0..n_skills).map(|_| rng.random_range(gamma_range.0..gamma_range.1)).collect();
    let start = Utc.with_ymd_and_hms(2011, 1, 3, 8, 0, 0).unwrap();
    let mut events = Vec::with_capacity(n_students * n_skills * opportunities);
    for i in 0..n_students {
        let sid = student_id(i);
        for t in 0..opportunities {
            for k in 0..n_skills {
                let p = sigmoid(theta[i] + beta[k] + gamma[k] * t as f64);
                let ok = rng.random::<f64>() < p;
                let step = (t * n_skills + k) as i64;
                events.push(InteractionEvent {
                    student_id: sid.clone(),
                    timestamp: start + Duration::seconds(step * 20),
                    duration_seconds: 20.0,
                    outcome: if ok { Outcome::Correct } else { Outcome::Incorrect },
                    kc_ids: vec![skill_id(k)],
                    opportunity: Some(t as u32 + 1),
                    problem_id: format!("{sid}-{k}-{t}"),
                });
            }
        }
    }
    AfmRecovery {
        events,
        theta: (0..n_students).map(|i| (student_id(i), theta[i])).collect(),
        beta: (0..n_skills).map(|k| (skill_id(k), beta[k])).collect(),
        gamma: (0..n_skills).map(|k| (skill_id(k), gamma[k])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{aggregate_weekly, IngestConfig};

    fn small() -> RegimeConfig {
        RegimeConfig { n_students: 30, n_weeks: 12, seed: 3, ..Default::default() }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.events, b.events);
        let c = generate(&RegimeConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn stationary_zero_noise_is_flat() {
        let cfg = RegimeConfig {
            effort: EffortRegime::Stationary,
            noise_sd: 0.0,
            student_scale_sd: 0.0,
            gap_prob: 0.0,
            ..small()
        };
        let c = generate(&cfg).unwrap();
        for m in c.truth.weekly_minutes.values() {
            assert!(m.iter().all(|&v| (v - 50.0).abs() < 1e-9), "{m:?}");
        }
    }

    #[test]
    fn no_gaps_when_probability_zero() {
        let c = generate(&RegimeConfig { gap_prob: 0.0, ..small() }).unwrap();
        let panel = aggregate_weekly(&c.events, &IngestConfig::default());
        assert!(panel.rows.iter().all(|r| r.minutes > 0.0));
    }

    #[test]
    fn ingest_round_trip_minutes() {
        let c = generate(&small()).unwrap();
        let panel = aggregate_weekly(&c.events, &IngestConfig::default());
        for (sid, rows) in panel.by_student() {
            let truth = &c.truth.weekly_minutes[sid];
            assert_eq!(rows.len(), truth.len());
            for (r, &m) in rows.iter().zip(truth) {
                assert!((r.minutes - m).abs() < 1e-6, "{sid} {}: {} vs {m}", r.week, r.minutes);
                assert_eq!(r.week.weeks_since(small().start_week) as usize, rows.iter().position(|x| x.week == r.week).unwrap());
            }
        }
    }

    #[test]
    fn curves_have_the_requested_shape() {
        let cfg = RegimeConfig::default();
        let e = cfg.effort_curve();
        assert!((e[0] - 15.0).abs() < 1e-12);
        assert!(e[5..].iter().all(|&v| v == 50.0));
        let s = cfg.skill_curve();
        let peak = s.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(s[11], peak);
        assert!(s[38] < s[20] && s[0] < s[11]);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&RegimeConfig { n_students: 0, ..small() }).is_err());
        assert!(generate(&RegimeConfig { gap_prob: 1.5, ..small() }).is_err());
    }

    #[test]
    fn correctness_rises_with_practice() {
        let c = generate(&RegimeConfig { n_students: 80, n_weeks: 16, seed: 11, ..Default::default() }).unwrap();
        let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        let mut by_count = [(0usize, 0usize); 3];
        for e in &c.events {
            let t = seen.entry((&e.student_id, &e.kc_ids[0])).or_default();
            let bucket = (*t).min(2);
            by_count[bucket].1 += 1;
            if e.outcome == crate::ingest::Outcome::Correct {
                by_count[bucket].0 += 1;
            }
            *t += 1;
        }
        let rate: Vec<f64> = by_count.iter().map(|&(k, n)| k as f64 / n as f64).collect();
        assert!(rate[0] < rate[1] && rate[1] < rate[2], "{rate:?}");
    }

    #[test]
    fn default_cohort_matches_target_level() {
        let c = generate(&RegimeConfig { n_students: 120, ..Default::default() }).unwrap();
        let all: Vec<f64> = c.truth.weekly_minutes.values().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((mean - 43.2).abs() <= 0.2 * 43.2, "{mean}");
        let with_gap = c.truth.weekly_minutes.values().filter(|m| m.contains(&0.0)).count();
        assert!(with_gap * 2 > c.truth.weekly_minutes.len());
    }

    #[test]
    fn truth_serializes() {
        let c = generate(&small()).unwrap();
        let json = serde_json::to_string(&c.truth).unwrap();
        let back: SynthTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back.config, c.truth.config);
        assert_eq!(back.weekly_minutes, c.truth.weekly_minutes);
        assert_eq!(back.beta.len(), small().n_skills);
    }
}
