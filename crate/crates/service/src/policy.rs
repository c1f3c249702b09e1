//! Forecast-to-goal mapping and explanation text.

use serde::{Deserialize, Serialize};

use crate::types::{CitedFeature, Direction, GoalCycle, GoalType, Recommendation, Variant};

/// Phrases that must never reach student-facing text.
pub fn default_blocked_phrases() -> Vec<String> {
    ["low learning rate", "low ability", "slow learner", "bad at"].map(String::from).to_vec()
}

/// Cohort cutoffs for the consistency score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortCutoffs {
    pub consistency_median: f64,
    pub consistency_q25: f64,
}

/// Per-student inputs to the policy. Feature values are the student's
/// current-week values; `None` is MISSING.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub forecast: f64,
    pub current: f64,
    pub recent_trend: Option<f64>,
    pub consistency_score: Option<f64>,
    pub student_ability: Option<f64>,
    pub student_week_difficulty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    RaiseExceeded,
    LowerInconsistent,
    Forecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub rule: Rule,
    pub value: f64,
    pub direction: Direction,
}

pub trait RecommendationPolicy: Send + Sync {
    fn decide(&self, goal: GoalType, last: &GoalCycle, signals: &Signals, cohort: &CohortCutoffs) -> Decision;
}

/// Default rule: raise after an exceeded goal with steady consistency, lower
/// when consistency is in the bottom quarter, otherwise follow the forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepRule {
    pub exceeded_ratio: f64,
    pub minutes_step: f64,
    pub skills_step: f64,
    pub minutes_granularity: f64,
    pub skills_granularity: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self { exceeded_ratio: 1.1, minutes_step: 10.0, skills_step: 1.0, minutes_granularity: 5.0, skills_granularity: 1.0 }
    }
}

impl StepRule {
    pub fn step(&self, goal: GoalType) -> f64 {
        match goal {
            GoalType::Minutes => self.minutes_step,
            GoalType::Skills => self.skills_step,
        }
    }

    pub fn granularity(&self, goal: GoalType) -> f64 {
        match goal {
            GoalType::Minutes => self.minutes_granularity,
            GoalType::Skills => self.skills_granularity,
        }
    }

    /// Nearest multiple of the granularity, never below one unit of it.
    pub fn round(&self, goal: GoalType, v: f64) -> f64 {
        let g = self.granularity(goal);
        ((v / g).round() * g).max(g)
    }
}

impl RecommendationPolicy for StepRule {
    fn decide(&self, goal: GoalType, last: &GoalCycle, s: &Signals, cohort: &CohortCutoffs) -> Decision {
        let achieved = last.achieved.unwrap_or(0.0);
        let step = self.step(goal);
        let (rule, raw) = match s.consistency_score {
            Some(c) if c < cohort.consistency_q25 => (Rule::LowerInconsistent, s.forecast.min(last.target - step)),
            Some(c) if achieved >= self.exceeded_ratio * last.target && c >= cohort.consistency_median => {
                (Rule::RaiseExceeded, s.forecast.max(last.target + step))
            }
            _ => (Rule::Forecast, s.forecast),
        };
        let value = self.round(goal, raw);
        let direction = if value > last.target {
            Direction::Raise
        } else if value < last.target {
            Direction::Lower
        } else {
            Direction::Keep
        };
        Decision { rule, value, direction }
    }
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn cite(name: &str, label: &str, value: f64) -> CitedFeature {
    CitedFeature { name: name.to_string(), label: label.to_string(), value }
}

fn trend_name(goal: GoalType) -> &'static str {
    match goal {
        GoalType::Minutes => "recent_change_minutes_mean",
        GoalType::Skills => "recent_change_skills_mean",
    }
}

fn current_name(goal: GoalType) -> &'static str {
    match goal {
        GoalType::Minutes => "minutes_current",
        GoalType::Skills => "skills_current",
    }
}

/// Opening sentence plus clauses that each cite one feature.
fn template(goal: GoalType, last: &GoalCycle, s: &Signals, d: &Decision) -> (String, Vec<(String, CitedFeature)>) {
    let unit = goal.unit();
    let v = fmt_value(d.value);
    let achieved = fmt_value(last.achieved.unwrap_or(0.0));
    let mut clauses = Vec::new();
    let head = match d.rule {
        Rule::RaiseExceeded => {
            let pct = (last.achieved.unwrap_or(0.0) / last.target * 100.0).round();
            if let Some(c) = s.consistency_score {
                clauses.push((
                    format!("their consistency score of {c:.2} shows steady practice across recent weeks"),
                    cite("consistency_score", "consistency score", c),
                ));
            }
            format!(
                "The student exceeded their goal in the most recent goal cycle ({achieved} {unit}, {pct:.0}% of the target), consider raising the goal to {v} {unit} to keep the student challenged."
            )
        }
        Rule::LowerInconsistent => {
            if let Some(c) = s.consistency_score {
                clauses.push((
                    format!("their consistency score of {c:.2} shows practice has varied a lot from week to week"),
                    cite("consistency_score", "consistency score", c),
                ));
            }
            format!(
                "The student reached {achieved} {unit} in the most recent goal cycle, but consider setting a smaller goal of {v} {unit} to help stabilize study habits."
            )
        }
        Rule::Forecast => {
            if let Some(t) = s.recent_trend {
                clauses.push((
                    format!("the recent trend is {t:+.1} {unit} per week"),
                    cite(trend_name(goal), "recent trend", t),
                ));
            }
            if let Some(a) = s.student_ability {
                clauses.push((format!("the current ability estimate is {a:.2}"), cite("student_ability", "current ability", a)));
            }
            if let Some(w) = s.student_week_difficulty {
                clauses.push((
                    format!("the week difficulty of the material practiced is {w:.2}"),
                    cite("student_week_difficulty", "week difficulty", w),
                ));
            }
            format!("Recent practice points to about {v} {unit} next week, so a goal of {v} {unit} is suggested.")
        }
    };
    if clauses.is_empty() {
        clauses.push((
            format!("this week's practice was {} {unit}", fmt_value(s.current)),
            cite(current_name(goal), "this week's practice", s.current),
        ));
    }
    (head, clauses)
}

fn blocked(text: &str, phrases: &[String]) -> bool {
    let lower = text.to_lowercase();
    phrases.iter().any(|p| !p.is_empty() && lower.contains(&p.to_lowercase()))
}

/// Builds the response for one variant. Clauses that would contain a blocked
/// phrase are dropped; if no cited clause survives, the explanation is
/// withheld and the response reports `VALUE_ONLY`.
pub fn recommend(
    policy: &dyn RecommendationPolicy,
    goal: GoalType,
    last: &GoalCycle,
    signals: &Signals,
    cohort: &CohortCutoffs,
    variant: Variant,
    blocked_phrases: &[String],
) -> Recommendation {
    let mut out = Recommendation {
        student_id: last.student_id.clone(),
        goal_type: goal,
        variant,
        recommended_value: None,
        direction: None,
        explanation: None,
        cited_features: Vec::new(),
    };
    if variant == Variant::None {
        return out;
    }
    let d = policy.decide(goal, last, signals, cohort);
    out.recommended_value = Some(d.value);
    out.direction = Some(d.direction);
    if variant == Variant::ValueOnly {
        return out;
    }
    let (head, clauses) = template(goal, last, signals, &d);
    let kept: Vec<(String, CitedFeature)> = clauses.into_iter().filter(|(t, _)| !blocked(t, blocked_phrases)).collect();
    if kept.is_empty() {
        out.variant = Variant::ValueOnly;
        return out;
    }
    let mut text = if blocked(&head, blocked_phrases) {
        format!("Suggested goal: {} {}.", fmt_value(d.value), goal.unit())
    } else {
        head
    };
    let because: Vec<&str> = kept.iter().map(|(t, _)| t.as_str()).collect();
    let mut reason = because.join("; ");
    if let Some(first) = reason.get(..1) {
        reason = first.to_uppercase() + &reason[1..];
    }
    text.push(' ');
    text.push_str(&reason);
    text.push('.');
    out.explanation = Some(text);
    out.cited_features = kept.into_iter().map(|(_, f)| f).collect();
    out
}
