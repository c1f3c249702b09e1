//! The goal type × intuition scenario set shown to tutors.

use std::path::Path;

use engagecast_core::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::policy::{CohortCutoffs, Signals};
use crate::types::{Direction, GoalCycle, GoalType, Intuition};

pub const BUILTIN: &str = include_str!("../fixtures/scenarios.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub title: String,
    pub goal_type: GoalType,
    pub intuition: Intuition,
    /// Virtual student the scenario's goals and recommendations attach to.
    pub student_id: String,
    pub cycles: Vec<GoalCycle>,
    pub signals: Signals,
    pub cohort: CohortCutoffs,
    pub expected_direction: Direction,
}

impl Scenario {
    pub fn last_completed(&self) -> Option<&GoalCycle> {
        self.cycles.iter().rev().find(|c| c.goal_type == self.goal_type && c.is_complete())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario fixtures: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario fixtures: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario fixtures: {0}")]
    Invalid(String),
}

/// Raise after meeting the goal, lower after missing it.
pub fn naive_direction(last: &GoalCycle) -> Direction {
    if last.achieved.unwrap_or(0.0) >= last.target {
        Direction::Raise
    } else {
        Direction::Lower
    }
}

/// Parses and checks a fixture set: one scenario per goal type × intuition
/// cell, each with a completed cycle, counter-intuitive ones expecting the
/// opposite of the naive direction.
pub fn parse(json: &str) -> Result<Vec<Scenario>, ScenarioError> {
    let list: Vec<Scenario> = serde_json::from_str(json)?;
    for g in GoalType::ALL {
        for i in [Intuition::Intuitive, Intuition::CounterIntuitive] {
            let n = list.iter().filter(|s| s.goal_type == g && s.intuition == i).count();
            if n != 1 {
                return Err(ScenarioError::Invalid(format!("{n} scenarios for {g:?} × {i:?}")));
            }
        }
    }
    for s in &list {
        let last = s.last_completed().ok_or_else(|| ScenarioError::Invalid(format!("{}: no completed cycle", s.id)))?;
        let naive = naive_direction(last);
        let opposite = s.expected_direction != naive;
        if opposite != (s.intuition == Intuition::CounterIntuitive) {
            return Err(ScenarioError::Invalid(format!("{}: expected direction does not match intuition", s.id)));
        }
        if s.cycles.iter().any(|c| c.student_id != s.student_id || c.target <= 0.0) {
            return Err(ScenarioError::Invalid(format!("{}: cycle does not belong to the scenario", s.id)));
        }
    }
    Ok(list)
}

pub fn builtin() -> Vec<Scenario> {
    parse(BUILTIN).expect("built-in scenarios are valid")
}

pub fn load(path: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    parse(&std::fs::read_to_string(path)?)
}

/// Presentation order for one session.
pub fn ordered(scenarios: &[Scenario], session: u64) -> Vec<Scenario> {
    let mut out = scenarios.to_vec();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(session, "scenarios")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_the_grid() {
        let s = builtin();
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn order_is_a_seeded_permutation() {
        let s = builtin();
        let a = ordered(&s, 7);
        assert_eq!(a, ordered(&s, 7));
        let mut ids: Vec<_> = a.iter().map(|x| x.id.clone()).collect();
        ids.sort();
        let mut want: Vec<_> = s.iter().map(|x| x.id.clone()).collect();
        want.sort();
        assert_eq!(ids, want);
        assert!((0..20).any(|k| ordered(&s, k) != a));
    }

    #[test]
    fn rejects_incomplete_grid() {
        let mut s: Vec<serde_json::Value> = serde_json::from_str(BUILTIN).unwrap();
        s.pop();
        assert!(parse(&serde_json::to_string(&s).unwrap()).is_err());
    }
}
