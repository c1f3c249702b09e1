use engagecast_core::eval::Target;
use engagecast_core::WeekId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoalType {
    Minutes,
    Skills,
}

impl GoalType {
    pub const ALL: [GoalType; 2] = [GoalType::Minutes, GoalType::Skills];

    pub fn target(self) -> Target {
        match self {
            Self::Minutes => Target::Minutes,
            Self::Skills => Target::Skills,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Minutes => "minutes",
            Self::Skills => "skills",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    None,
    ValueOnly,
    ValuePlusExplanation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalSource {
    Accepted,
    Adjusted,
    Manual,
    /// Loaded from a fixture rather than entered through the API.
    Seeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub first: WeekId,
    pub last: WeekId,
}

/// One goal period. `achieved` stays `None` until the panel covers the
/// whole period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalCycle {
    pub student_id: String,
    pub cycle: u32,
    pub goal_type: GoalType,
    pub target: f64,
    pub achieved: Option<f64>,
    pub period: Period,
    pub source: GoalSource,
}

impl GoalCycle {
    pub fn is_complete(&self) -> bool {
        self.achieved.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Raise,
    Lower,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedFeature {
    pub name: String,
    /// Wording used for the feature inside explanation text.
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub student_id: String,
    pub goal_type: GoalType,
    pub variant: Variant,
    pub recommended_value: Option<f64>,
    pub direction: Option<Direction>,
    pub explanation: Option<String>,
    pub cited_features: Vec<CitedFeature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Intuition {
    Intuitive,
    CounterIntuitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub student_id: String,
    pub target: Target,
    pub prediction: f64,
    pub model_kind: String,
    pub week: WeekId,
    pub target_week: WeekId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRequest {
    pub student_id: String,
    pub goal_type: GoalType,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRequest {
    pub student_id: String,
    pub goal_type: GoalType,
    pub value: f64,
    pub source: GoalSource,
}
