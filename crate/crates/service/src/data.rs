//! Immutable artifacts the service answers from. A reload builds a new
//! value and swaps the shared handle.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use engagecast_core::eval::{EvalError, OnlineInput, Target};
use engagecast_core::features::{FeatureConfig, FeatureMatrix, FeatureSchema};
use engagecast_core::ingest::Panel;
use engagecast_core::predictors::TrainedModel;
use engagecast_core::{stats, WeekId};
use serde::{Deserialize, Serialize};

use crate::policy::{CohortCutoffs, Signals};
use crate::types::{ForecastResponse, GoalCycle, GoalType, Period};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("model for {target} does not match the feature schema: missing column {column}")]
    SchemaMismatch { target: &'static str, column: String },
}

/// Where [`ServiceData::load`] reads from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub panel: PathBuf,
    pub features: PathBuf,
    /// Feature schema JSON; the default layout when absent.
    pub schema: Option<PathBuf>,
    pub model_minutes: Option<PathBuf>,
    pub model_skills: Option<PathBuf>,
    /// JSON array of completed goal cycles for panel students.
    pub cycles: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Lookup {
    UnknownStudent,
    UnknownWeek,
    NoModel(Target),
    Failed(String),
}

pub struct ServiceData {
    pub panel: Panel,
    pub matrix: FeatureMatrix,
    pub models: BTreeMap<Target, TrainedModel>,
    pub cohort: CohortCutoffs,
    pub seeded_cycles: BTreeMap<String, Vec<GoalCycle>>,
}

fn open(path: &PathBuf) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io { path: path.clone(), source })
}

fn parse_err(path: &PathBuf, e: impl std::fmt::Display) -> DataError {
    DataError::Parse { path: path.clone(), message: e.to_string() }
}

impl ServiceData {
    pub fn new(
        panel: Panel,
        matrix: FeatureMatrix,
        models: BTreeMap<Target, TrainedModel>,
        cycles: Vec<GoalCycle>,
    ) -> Result<Self, DataError> {
        for (t, m) in &models {
            if let Some(c) = m.feature_names.iter().find(|n| matrix.schema.index_of(n).is_none()) {
                return Err(DataError::SchemaMismatch { target: t.as_str(), column: c.clone() });
            }
        }
        let cohort = cohort_cutoffs(&panel, &matrix);
        let mut seeded_cycles: BTreeMap<String, Vec<GoalCycle>> = BTreeMap::new();
        for c in cycles {
            seeded_cycles.entry(c.student_id.clone()).or_default().push(c);
        }
        Ok(Self { panel, matrix, models, cohort, seeded_cycles })
    }

    pub fn load(paths: &DataPaths) -> Result<Self, DataError> {
        let panel = Panel::read_csv(open(&paths.panel)?).map_err(|e| parse_err(&paths.panel, e))?;
        let schema: FeatureSchema = match &paths.schema {
            Some(p) => serde_json::from_reader(open(p)?).map_err(|e| parse_err(p, e))?,
            None => FeatureSchema::for_config(&FeatureConfig::default()),
        };
        let matrix = FeatureMatrix::read_csv(open(&paths.features)?, schema).map_err(|e| parse_err(&paths.features, e))?;
        let mut models = BTreeMap::new();
        for (t, p) in [(Target::Minutes, &paths.model_minutes), (Target::Skills, &paths.model_skills)] {
            if let Some(p) = p {
                let m: TrainedModel = serde_json::from_reader(open(p)?).map_err(|e| parse_err(p, e))?;
                models.insert(t, m);
            }
        }
        let cycles: Vec<GoalCycle> = match &paths.cycles {
            Some(p) => serde_json::from_reader(open(p)?).map_err(|e| parse_err(p, e))?,
            None => Vec::new(),
        };
        Self::new(panel, matrix, models, cycles)
    }

    pub fn has_student(&self, student: &str) -> bool {
        self.panel.student(student).is_some()
    }

    pub fn last_week(&self, student: &str) -> Option<WeekId> {
        self.panel.student(student).and_then(|r| r.last()).map(|r| r.week)
    }

    fn input(&self, student: &str, target: Target, week: Option<WeekId>) -> Result<(OnlineInput, &TrainedModel), Lookup> {
        if !self.has_student(student) {
            return Err(Lookup::UnknownStudent);
        }
        let model = self.models.get(&target).ok_or(Lookup::NoModel(target))?;
        let input = OnlineInput::build(&self.panel, &self.matrix, target, model, student, week).map_err(|e| match e {
            EvalError::UnknownStudent(_) => Lookup::UnknownStudent,
            EvalError::UnknownWeek { .. } => Lookup::UnknownWeek,
            other => Lookup::Failed(other.to_string()),
        })?;
        Ok((input, model))
    }

    /// One-step forecast from `week`, or from the student's last week.
    pub fn forecast(&self, student: &str, target: Target, week: Option<WeekId>) -> Result<ForecastResponse, Lookup> {
        let (input, model) = self.input(student, target, week)?;
        let prediction = input.predict(model).map_err(|e| Lookup::Failed(e.to_string()))?;
        Ok(ForecastResponse {
            student_id: student.to_string(),
            target,
            prediction,
            model_kind: model.kind.as_str().to_string(),
            week: input.week,
            target_week: input.next_week,
        })
    }

    fn feature(&self, student: &str, week: WeekId, name: &str) -> Option<f64> {
        let c = self.matrix.schema.index_of(name)?;
        self.matrix.find(student, week)?.values[c]
    }

    pub fn signals(&self, student: &str, goal: GoalType) -> Result<Signals, Lookup> {
        let f = self.forecast(student, goal.target(), None)?;
        let rows = self.panel.student(student).ok_or(Lookup::UnknownStudent)?;
        let last = rows.last().expect("panel students have rows");
        let trend = match goal {
            GoalType::Minutes => "recent_change_minutes_mean",
            GoalType::Skills => "recent_change_skills_mean",
        };
        Ok(Signals {
            forecast: f.prediction,
            current: goal.target().value(last),
            recent_trend: self.feature(student, f.week, trend),
            consistency_score: self.feature(student, f.week, "consistency_score"),
            student_ability: self.feature(student, f.week, "student_ability"),
            student_week_difficulty: self.feature(student, f.week, "student_week_difficulty"),
        })
    }

    /// Sum of the goal's measure over the period, once the panel covers it.
    pub fn achieved(&self, student: &str, goal: GoalType, period: &Period) -> Option<f64> {
        let rows = self.panel.student(student)?;
        let weeks = WeekId::range_inclusive(period.first, period.last);
        weeks
            .iter()
            .map(|w| rows.iter().find(|r| r.week == *w).map(|r| goal.target().value(r)))
            .sum::<Option<f64>>()
    }
}

/// Median and lower quartile of each student's latest consistency score.
pub fn cohort_cutoffs(panel: &Panel, matrix: &FeatureMatrix) -> CohortCutoffs {
    let col = matrix.schema.index_of("consistency_score");
    let latest: Vec<f64> = panel
        .by_student()
        .into_iter()
        .filter_map(|(s, rows)| {
            let w = rows.last()?.week;
            matrix.find(s, w)?.values[col?]
        })
        .collect();
    match (stats::percentile(&latest, 50.0), stats::percentile(&latest, 25.0)) {
        (Ok(m), Ok(q)) => CohortCutoffs { consistency_median: m, consistency_q25: q },
        _ => CohortCutoffs { consistency_median: 0.0, consistency_q25: 0.0 },
    }
}
