//! Additive Factors Model.
//!
//! `P(correct) = σ(θ_student + Σ_k q_k·β_k + Σ_k q_k·γ_k·T_k)` where `T_k` is
//! the number of prior opportunities the student had on skill `k`. Fits are
//! penalized maximum likelihood with `γ ≥ 0`, recomputed on rolling windows
//! of weeks; the rolling fits drive the mastery sweep and the three learner
//! state features.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{IngestConfig, InteractionEvent, MasteryEvent};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::week::WeekId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AfmError {
    #[error("window contains no graded events")]
    NoGradedEvents,
    #[error("objective became non-finite")]
    NonFiniteObjective,
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("invalid AFM config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, AfmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateForm {
    /// Opportunity-weighted mean of γ over the skills practiced that week.
    #[default]
    WeightedMean,
    /// Σ γ_k·T_k over the skills practiced that week.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfmConfig {
    pub l2_theta: f64,
    pub l2_beta: f64,
    pub l2_gamma: f64,
    pub mastery_threshold: f64,
    pub window_weeks: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub learning_rate_form: LearningRateForm,
}

impl Default for AfmConfig {
    fn default() -> Self {
        Self {
            l2_theta: 1.0,
            l2_beta: 0.1,
            l2_gamma: 0.1,
            mastery_threshold: 0.95,
            window_weeks: 5,
            max_iters: 500,
            tolerance: 1e-6,
            learning_rate_form: LearningRateForm::WeightedMean,
        }
    }
}

impl AfmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AfmError::InvalidConfig(m));
        if [self.l2_theta, self.l2_beta, self.l2_gamma].iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return bad("penalties must be finite and ≥ 0".into());
        }
        if !(self.mastery_threshold > 0.0 && self.mastery_threshold < 1.0) {
            return bad(format!("mastery_threshold must lie in (0,1), got {}", self.mastery_threshold));
        }
        if self.window_weeks < 1 {
            return bad("window_weeks must be ≥ 1".into());
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0".into());
        }
        Ok(())
    }
}

/// Skill index table: which skills each step requires.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QMatrix {
    skills: Vec<String>,
    index: HashMap<String, u32>,
}

impl QMatrix {
    pub fn from_events(events: &[InteractionEvent]) -> Self {
        let mut names: Vec<&str> = events.iter().flat_map(|e| e.kc_ids.iter().map(String::as_str)).collect();
        names.sort_unstable();
        names.dedup();
        let skills: Vec<String> = names.into_iter().map(str::to_string).collect();
        let index = skills.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Self { skills, index }
    }

    pub fn skills(&self) -> &[String] {
        &self.skills
    }

    pub fn index_of(&self, skill: &str) -> Option<u32> {
        self.index.get(skill).copied()
    }

    /// `q_jk = 1` skill indices for one event; empty for untagged steps.
    pub fn row(&self, event: &InteractionEvent) -> Vec<u32> {
        event.kc_ids.iter().filter_map(|k| self.index_of(k)).collect()
    }
}

/// Prior-opportunity counts `T[student, skill]`, advanced in chronological
/// order.
#[derive(Debug, Clone, Default)]
pub struct OpportunityCounter {
    counts: HashMap<(u32, u32), u32>,
}

impl OpportunityCounter {
    pub fn get(&self, student: u32, skill: u32) -> u32 {
        self.counts.get(&(student, skill)).copied().unwrap_or(0)
    }

    /// Returns the prior counts for `skills` and then records the practice.
    pub fn observe(&mut self, student: u32, skills: &[u32]) -> Vec<u32> {
        skills
            .iter()
            .map(|&k| {
                let c = self.counts.entry((student, k)).or_insert(0);
                let prior = *c;
                *c += 1;
                prior
            })
            .collect()
    }
}

/// Fitted parameters for one window. Absent students and skills take the
/// population prior 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfmParams<T = f64> {
    pub window: Option<(WeekId, WeekId)>,
    pub theta: BTreeMap<String, T>,
    pub beta: BTreeMap<String, T>,
    pub gamma: BTreeMap<String, T>,
}

impl<T: Scalar> Default for AfmParams<T> {
    fn default() -> Self {
        Self {
            window: None,
            theta: BTreeMap::new(),
            beta: BTreeMap::new(),
            gamma: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> AfmParams<T> {
    pub fn theta_or_prior(&self, student: &str) -> T {
        self.theta.get(student).copied().unwrap_or_else(T::zero)
    }

    pub fn beta_or_prior(&self, skill: &str) -> T {
        self.beta.get(skill).copied().unwrap_or_else(T::zero)
    }

    pub fn gamma_or_prior(&self, skill: &str) -> T {
        self.gamma.get(skill).copied().unwrap_or_else(T::zero)
    }

    /// Single-skill proficiency `σ(θ + β_k + γ_k·T)` used for mastery.
    pub fn proficiency(&self, student: &str, skill: &str, opportunities: T) -> T {
        sigmoid(self.theta_or_prior(student) + self.beta_or_prior(skill) + self.gamma_or_prior(skill) * opportunities)
    }
}

/// Probability of a correct step; every student and skill must be known.
pub fn predict_correct<T: Scalar>(params: &AfmParams<T>, student: &str, kcs: &[(&str, T)]) -> Result<T> {
    let theta = *params
        .theta
        .get(student)
        .ok_or_else(|| AfmError::UnknownStudent(student.to_string()))?;
    let mut z = theta;
    for &(k, t) in kcs {
        let b = *params.beta.get(k).ok_or_else(|| AfmError::UnknownSkill(k.to_string()))?;
        let g = *params.gamma.get(k).ok_or_else(|| AfmError::UnknownSkill(k.to_string()))?;
        z = z + b + g * t;
    }
    Ok(sigmoid(z))
}

/// Like [`predict_correct`] but unseen students and skills get parameter 0.
pub fn predict_correct_or_prior<T: Scalar>(params: &AfmParams<T>, student: &str, kcs: &[(&str, T)]) -> T {
    let z = kcs.iter().fold(params.theta_or_prior(student), |z, &(k, t)| {
        z + params.beta_or_prior(k) + params.gamma_or_prior(k) * t
    });
    sigmoid(z)
}

/// Penalized Bernoulli likelihood over a dense observation table.
///
/// Parameter layout: `[θ_0..θ_{S−1}, β_0..β_{K−1}, γ_0..γ_{K−1}]`.
#[derive(Debug, Clone)]
pub struct AfmProblem<T> {
    pub n_students: usize,
    pub n_skills: usize,
    student: Vec<u32>,
    correct: Vec<bool>,
    term_start: Vec<u32>,
    term_skill: Vec<u32>,
    term_opp: Vec<T>,
    l2_theta: T,
    l2_beta: T,
    l2_gamma: T,
}

/// One observation: `(student, correct, [(skill, prior opportunities)])`.
pub type Observation<'a, T> = (u32, bool, &'a [(u32, T)]);

#[derive(Debug, Clone)]
pub struct AscentOutcome<T> {
    pub x: Vec<T>,
    /// Objective after each accepted iterate, starting with the initial point.
    pub trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> AfmProblem<T> {
    pub fn new<'a>(
        n_students: usize,
        n_skills: usize,
        observations: impl IntoIterator<Item = Observation<'a, T>>,
        l2: (T, T, T),
    ) -> Self {
        let mut p = Self {
            n_students,
            n_skills,
            student: Vec::new(),
            correct: Vec::new(),
            term_start: vec![0],
            term_skill: Vec::new(),
            term_opp: Vec::new(),
            l2_theta: l2.0,
            l2_beta: l2.1,
            l2_gamma: l2.2,
        };
        for (s, y, terms) in observations {
            debug_assert!((s as usize) < n_students);
            p.student.push(s);
            p.correct.push(y);
            for &(k, t) in terms {
                debug_assert!((k as usize) < n_skills);
                p.term_skill.push(k);
                p.term_opp.push(t);
            }
            p.term_start.push(p.term_skill.len() as u32);
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.n_students + 2 * self.n_skills
    }

    pub fn n_observations(&self) -> usize {
        self.student.len()
    }

    #[inline]
    fn terms(&self, j: usize) -> std::ops::Range<usize> {
        self.term_start[j] as usize..self.term_start[j + 1] as usize
    }

    #[inline]
    fn linear(&self, x: &[T], j: usize) -> T {
        let (beta, gamma) = (self.n_students, self.n_students + self.n_skills);
        let mut z = x[self.student[j] as usize];
        for t in self.terms(j) {
            let k = self.term_skill[t] as usize;
            z = z + x[beta + k] + x[gamma + k] * self.term_opp[t];
        }
        z
    }

    fn penalty(&self, x: &[T]) -> T {
        let half = T::lit(0.5);
        let (s, k) = (self.n_students, self.n_skills);
        let sq = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>();
        half * (self.l2_theta * sq(&x[..s]) + self.l2_beta * sq(&x[s..s + k]) + self.l2_gamma * sq(&x[s + k..]))
    }

    pub fn objective(&self, x: &[T]) -> T {
        let ll = (0..self.n_observations())
            .map(|j| {
                let z = self.linear(x, j);
                let y = if self.correct[j] { z } else { T::zero() };
                y - softplus(z)
            })
            .sum::<T>();
        ll - self.penalty(x)
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        self.gradient_and_curvature(x).1
    }

    /// Objective, gradient, and the diagonal of the negative Hessian.
    pub fn gradient_and_curvature(&self, x: &[T]) -> (T, Vec<T>, Vec<T>) {
        let (s, k) = (self.n_students, self.n_skills);
        let mut g = vec![T::zero(); self.n_params()];
        let mut h = vec![T::zero(); self.n_params()];
        let mut ll = T::zero();
        for j in 0..self.n_observations() {
            let z = self.linear(x, j);
            let p = sigmoid(z);
            let y = if self.correct[j] { T::one() } else { T::zero() };
            ll = ll + y * z - softplus(z);
            let r = y - p;
            let w = p * (T::one() - p);
            let st = self.student[j] as usize;
            g[st] = g[st] + r;
            h[st] = h[st] + w;
            for t in self.terms(j) {
                let kk = self.term_skill[t] as usize;
                let opp = self.term_opp[t];
                g[s + kk] = g[s + kk] + r;
                h[s + kk] = h[s + kk] + w;
                g[s + k + kk] = g[s + k + kk] + r * opp;
                h[s + k + kk] = h[s + k + kk] + w * opp * opp;
            }
        }
        for i in 0..self.n_params() {
            let l2 = if i < s {
                self.l2_theta
            } else if i < s + k {
                self.l2_beta
            } else {
                self.l2_gamma
            };
            g[i] = g[i] - l2 * x[i];
            h[i] = h[i] + l2;
        }
        (ll - self.penalty(x), g, h)
    }

    fn project(&self, x: &mut [T]) {
        let start = self.n_students + self.n_skills;
        for v in &mut x[start..] {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    /// Diagonally scaled gradient ascent with step halving and projection of
    /// `γ` onto `[0, ∞)`. Accepted iterates never decrease the objective.
    pub fn maximize(&self, mut x: Vec<T>, max_iters: usize, tolerance: T) -> Result<AscentOutcome<T>> {
        self.project(&mut x);
        let mut obj = self.objective(&x);
        if !obj.is_finite() {
            return Err(AfmError::NonFiniteObjective);
        }
        let mut trace = vec![obj];
        let mut step = T::one();
        let mut converged = false;
        let mut iterations = 0;
        let eps = T::lit(1e-12);
        while iterations < max_iters {
            iterations += 1;
            let (_, g, h) = self.gradient_and_curvature(&x);
            let dir: Vec<T> = g.iter().zip(&h).map(|(&gi, &hi)| gi / hi.max(eps)).collect();
            let mut alpha = (step + step).min(T::one());
            let mut accepted = None;
            for _ in 0..60 {
                let mut cand: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi + alpha * di).collect();
                self.project(&mut cand);
                let c = self.objective(&cand);
                if c.is_finite() && c >= obj {
                    accepted = Some((cand, c));
                    break;
                }
                alpha = alpha * T::lit(0.5);
            }
            let Some((cand, c)) = accepted else {
                converged = true;
                break;
            };
            step = alpha;
            let change = (c - obj).abs() / obj.abs().max(T::one());
            x = cand;
            obj = c;
            trace.push(obj);
            if change < tolerance {
                converged = true;
                break;
            }
        }
        Ok(AscentOutcome { x, trace, iterations, converged })
    }
}

/// One graded step in chronological order.
#[derive(Debug, Clone)]
pub struct LogEntry {
    pub student: u32,
    pub week: WeekId,
    pub correct: bool,
    /// `(skill, prior opportunities)` for every required skill.
    pub terms: Vec<(u32, u32)>,
}

/// Events prepared for AFM: chronological, skill-indexed, with prior
/// opportunity counts taken over each student's full history.
#[derive(Debug, Clone)]
pub struct PracticeLog {
    pub students: Vec<String>,
    pub qmatrix: QMatrix,
    pub entries: Vec<LogEntry>,
}

impl PracticeLog {
    pub fn build(events: &[InteractionEvent], ingest: &IngestConfig) -> Self {
        let qmatrix = QMatrix::from_events(events);
        let mut students: Vec<String> = events.iter().map(|e| e.student_id.clone()).collect();
        students.sort_unstable();
        students.dedup();
        let sidx: HashMap<&str, u32> = students.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();

        let mut order: Vec<usize> = (0..events.len()).collect();
        // Stable: ties in timestamp keep input order.
        order.sort_by_key(|&i| events[i].timestamp);
        let mut counter = OpportunityCounter::default();
        let mut entries = Vec::new();
        for i in order {
            let e = &events[i];
            let skills = qmatrix.row(e);
            if skills.is_empty() {
                continue;
            }
            let s = sidx[e.student_id.as_str()];
            let prior = counter.observe(s, &skills);
            entries.push(LogEntry {
                student: s,
                week: ingest.week_of(&e.timestamp),
                correct: e.outcome.is_success(),
                terms: skills.into_iter().zip(prior).collect(),
            });
        }
        Self { students, qmatrix, entries }
    }

    pub fn weeks(&self) -> Vec<WeekId> {
        match (self.entries.iter().map(|e| e.week).min(), self.entries.iter().map(|e| e.week).max()) {
            (Some(a), Some(b)) => WeekId::range_inclusive(a, b),
            _ => Vec::new(),
        }
    }

    /// Fits AFM on entries with `first ≤ week ≤ last`.
    pub fn fit_window<T: Scalar>(
        &self,
        first: WeekId,
        last: WeekId,
        config: &AfmConfig,
        seed: u64,
    ) -> Result<AfmParams<T>> {
        let picked: Vec<&LogEntry> = self.entries.iter().filter(|e| e.week >= first && e.week <= last).collect();
        let mut params = fit_entries(self, &picked, config, seed)?;
        params.window = Some((first, last));
        Ok(params)
    }
}

fn fit_entries<T: Scalar>(
    log: &PracticeLog,
    picked: &[&LogEntry],
    config: &AfmConfig,
    seed: u64,
) -> Result<AfmParams<T>> {
    config.validate()?;
    if picked.is_empty() {
        return Err(AfmError::NoGradedEvents);
    }
    // Dense local indices, in global index order for determinism.
    let mut s_used: Vec<u32> = picked.iter().map(|e| e.student).collect();
    s_used.sort_unstable();
    s_used.dedup();
    let mut k_used: Vec<u32> = picked.iter().flat_map(|e| e.terms.iter().map(|t| t.0)).collect();
    k_used.sort_unstable();
    k_used.dedup();
    let s_local: HashMap<u32, u32> = s_used.iter().enumerate().map(|(i, &s)| (s, i as u32)).collect();
    let k_local: HashMap<u32, u32> = k_used.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();

    let terms: Vec<Vec<(u32, T)>> = picked
        .iter()
        .map(|e| e.terms.iter().map(|&(k, t)| (k_local[&k], T::lit(t as f64))).collect())
        .collect();
    let problem = AfmProblem::new(
        s_used.len(),
        k_used.len(),
        picked.iter().zip(&terms).map(|(e, t)| (s_local[&e.student], e.correct, t.as_slice())),
        (T::lit(config.l2_theta), T::lit(config.l2_beta), T::lit(config.l2_gamma)),
    );
    let out = problem.maximize(initial_point(&problem, seed), config.max_iters, T::lit(config.tolerance))?;

    let (ns, nk) = (s_used.len(), k_used.len());
    let skills = log.qmatrix.skills();
    Ok(AfmParams {
        window: None,
        theta: s_used.iter().enumerate().map(|(i, &s)| (log.students[s as usize].clone(), out.x[i])).collect(),
        beta: k_used.iter().enumerate().map(|(i, &k)| (skills[k as usize].clone(), out.x[ns + i])).collect(),
        gamma: k_used
            .iter()
            .enumerate()
            .map(|(i, &k)| (skills[k as usize].clone(), out.x[ns + nk + i]))
            .collect(),
    })
}

/// Small seeded jitter around zero; γ starts non-negative.
fn initial_point<T: Scalar>(problem: &AfmProblem<T>, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..problem.n_params())
        .map(|_| T::lit(rng.random_range(-1e-3..1e-3)))
        .collect()
}

/// Fits AFM on an event set (one window). Events without skills are skipped.
pub fn fit_afm(events: &[InteractionEvent], config: &AfmConfig, seed: u64) -> Result<AfmParams<f64>> {
    let log = PracticeLog::build(events, &IngestConfig::default());
    let weeks = log.weeks();
    let (Some(&first), Some(&last)) = (weeks.first(), weeks.last()) else {
        return Err(AfmError::NoGradedEvents);
    };
    log.fit_window(first, last, config, seed)
}

/// Per-week fits on `[t − window + 1, t]`; early weeks use whatever history
/// exists. Weeks whose window holds no graded events get no fit.
pub fn rolling_refit(log: &PracticeLog, config: &AfmConfig, seed: u64) -> Result<BTreeMap<WeekId, AfmParams<f64>>> {
    config.validate()?;
    let weeks = log.weeks();
    let Some(&start) = weeks.first() else {
        return Ok(BTreeMap::new());
    };
    let fits: Vec<Option<(WeekId, AfmParams<f64>)>> = weeks
        .par_iter()
        .map(|&t| {
            let mut first = t.offset(-(config.window_weeks as i64 - 1));
            if first < start {
                first = start;
            }
            match log.fit_window(first, t, config, seed) {
                Ok(p) => Ok(Some((t, p))),
                Err(AfmError::NoGradedEvents) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(fits.into_iter().flatten().collect())
}

/// Cumulative opportunity counts at the end of each practiced week:
/// `(student, week) → [(skill, T)]` for the skills practiced that week.
pub fn weekly_practice(log: &PracticeLog) -> BTreeMap<(u32, WeekId), BTreeMap<u32, u32>> {
    let mut out: BTreeMap<(u32, WeekId), BTreeMap<u32, u32>> = BTreeMap::new();
    for e in &log.entries {
        let m = out.entry((e.student, e.week)).or_default();
        for &(k, prior) in &e.terms {
            let v = m.entry(k).or_insert(0);
            *v = (*v).max(prior + 1);
        }
    }
    out
}

/// First week each student-skill pair's proficiency exceeds the threshold,
/// evaluated in weeks where the skill was practiced, using that week's fit.
pub fn mastery_sweep(
    log: &PracticeLog,
    fits: &BTreeMap<WeekId, AfmParams<f64>>,
    threshold: f64,
) -> Vec<MasteryEvent> {
    let practice = weekly_practice(log);
    let skills = log.qmatrix.skills();
    let mut mastered: BTreeMap<(u32, u32), WeekId> = BTreeMap::new();
    for (&(s, week), per_skill) in &practice {
        let Some(fit) = fits.get(&week) else { continue };
        let student = &log.students[s as usize];
        for (&k, &t) in per_skill {
            if mastered.contains_key(&(s, k)) {
                continue;
            }
            if fit.proficiency(student, &skills[k as usize], t as f64) > threshold {
                mastered.insert((s, k), week);
            }
        }
    }
    let mut out: Vec<MasteryEvent> = mastered
        .into_iter()
        .map(|((s, k), week)| MasteryEvent {
            student_id: log.students[s as usize].clone(),
            skill: skills[k as usize].clone(),
            week,
        })
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub ability: Option<f64>,
    pub learning_rate: Option<f64>,
    pub week_difficulty: Option<f64>,
}

/// The three learner-state features for one student-week from that week's
/// fit. Difficulty is the negated opportunity-weighted mean easiness of the
/// skills practiced that week.
pub fn learner_state(
    fit: &AfmParams<f64>,
    student: &str,
    practiced: &[(&str, u32)],
    form: LearningRateForm,
) -> LearnerState {
    let ability = fit.theta.get(student).copied();
    let total: f64 = practiced.iter().map(|&(_, t)| t as f64).sum();
    if total <= 0.0 {
        return LearnerState { ability, ..Default::default() };
    }
    let beta_sum: f64 = practiced.iter().map(|&(k, t)| fit.beta_or_prior(k) * t as f64).sum();
    let gamma_sum: f64 = practiced.iter().map(|&(k, t)| fit.gamma_or_prior(k) * t as f64).sum();
    let learning_rate = match form {
        LearningRateForm::WeightedMean => gamma_sum / total,
        LearningRateForm::Cumulative => gamma_sum,
    };
    LearnerState {
        ability,
        learning_rate: Some(learning_rate),
        week_difficulty: Some(-beta_sum / total),
    }
}

/// Learner state for every practiced student-week that has a fit.
pub fn afm_features(
    log: &PracticeLog,
    fits: &BTreeMap<WeekId, AfmParams<f64>>,
    form: LearningRateForm,
) -> BTreeMap<(String, WeekId), LearnerState> {
    let skills = log.qmatrix.skills();
    let mut out = BTreeMap::new();
    // ability is defined for any student present in the week's window fit
    for (&week, fit) in fits {
        for (student, &theta) in &fit.theta {
            out.insert(
                (student.clone(), week),
                LearnerState { ability: Some(theta), ..Default::default() },
            );
        }
    }
    for ((s, week), per_skill) in weekly_practice(log) {
        let Some(fit) = fits.get(&week) else { continue };
        let student = &log.students[s as usize];
        let practiced: Vec<(&str, u32)> = per_skill.iter().map(|(&k, &t)| (skills[k as usize].as_str(), t)).collect();
        out.insert((student.clone(), week), learner_state(fit, student, &practiced, form));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfmExport {
    pub fits: BTreeMap<WeekId, AfmParams<f64>>,
}
