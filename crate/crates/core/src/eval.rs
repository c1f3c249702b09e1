//! Student split, expanding-window CV, one-step forecasting, segment MAEs,
//! paired bootstrap comparisons and the benchmark runner.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afm::LearnerState;
use crate::derive_seed;
use crate::explain::{self, ImportanceTable};
use crate::features::{build_matrix, FeatureConfig, FeatureMatrix, FeatureSchema, StartQuartiles};
use crate::ingest::{Panel, StudentWeek};
use crate::predictors::{
    fit_supervised, DesignInfo, Family, ForecastInput, HeuristicStats, HyperParams, PredictorError, PredictorKind,
    TrainedModel,
};
use crate::stats::{self, BootstrapConfig, BootstrapInterval, ComparisonStats, FriedmanResult, StatsError};
use crate::week::WeekId;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 students, got {0}")]
    TooFewStudents(usize),
    #[error("need at least {needed} weeks for {folds} folds, got {weeks}")]
    TooFewWeeks { weeks: usize, folds: usize, needed: usize },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("no rows to evaluate: {0}")]
    Empty(String),
    #[error("forecast sets are not paired: {0}")]
    Unpaired(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Explain(Box<explain::ExplainError>),
    #[error("unknown student {0}")]
    UnknownStudent(String),
    #[error("student {student} has no row for week {week}")]
    UnknownWeek { student: String, week: WeekId },
}

impl From<explain::ExplainError> for EvalError {
    fn from(e: explain::ExplainError) -> Self {
        Self::Explain(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Minutes,
    Skills,
}

impl Target {
    pub const ALL: [Target; 2] = [Self::Minutes, Self::Skills];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Minutes => "minutes",
            Self::Skills => "skills",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn value(self, row: &StudentWeek) -> f64 {
        match self {
            Self::Minutes => row.y_min,
            Self::Skills => row.y_skill,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub dev_fraction: f64,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { dev_fraction: 0.7, cv_folds: 5, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(EvalError::InvalidConfig("dev_fraction must lie in (0, 1)".into()));
        }
        if self.cv_folds == 0 {
            return Err(EvalError::InvalidConfig("cv_folds must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle of the sorted ids; the first `round(n·dev_fraction)`
/// (clamped to leave both sides non-empty) form the development set.
pub fn student_split<S: AsRef<str>>(ids: &[S], spec: &SplitSpec) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    spec.validate()?;
    let mut sorted: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
    sorted.sort();
    sorted.dedup();
    let n = sorted.len();
    if n < 2 {
        return Err(EvalError::TooFewStudents(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sorted.shuffle(&mut rng);
    let n_dev = ((n as f64 * spec.dev_fraction).round() as usize).clamp(1, n - 1);
    let holdout = sorted.split_off(n_dev);
    Ok((sorted.into_iter().collect(), holdout.into_iter().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    pub train_first: WeekId,
    pub train_last: WeekId,
    pub validate_first: WeekId,
    pub validate_last: WeekId,
}

impl CvFold {
    pub fn trains_on(&self, week: WeekId) -> bool {
        week >= self.train_first && week <= self.train_last
    }

    pub fn validates_on(&self, week: WeekId) -> bool {
        week >= self.validate_first && week <= self.validate_last
    }
}

/// Expanding-window folds over `folds + 1` contiguous blocks of the sorted
/// distinct weeks; earlier blocks absorb the remainder.
pub fn timeseries_cv(weeks: &[WeekId], folds: usize) -> Result<Vec<CvFold>> {
    let mut w = weeks.to_vec();
    w.sort_unstable();
    w.dedup();
    let blocks = folds + 1;
    if folds == 0 || w.len() < blocks {
        return Err(EvalError::TooFewWeeks { weeks: w.len(), folds, needed: blocks });
    }
    let (base, extra) = (w.len() / blocks, w.len() % blocks);
    let mut bounds = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        bounds.push((start, start + len - 1));
        start += len;
    }
    Ok((1..blocks)
        .map(|j| CvFold {
            fold: j,
            train_first: w[0],
            train_last: w[bounds[j - 1].1],
            validate_first: w[bounds[j].0],
            validate_last: w[bounds[j].1],
        })
        .collect())
}

/// One student's target series over all panel rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentSeries {
    pub id: String,
    pub weeks: Vec<WeekId>,
    pub values: Vec<f64>,
    pub excluded: Vec<bool>,
}

/// Forecast origin `(student, origin)` predicting the next row's target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub student: usize,
    pub origin: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Samples for one target: every student-week with a next week whose
/// target row is not excluded.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub target: Target,
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    pub series: Vec<StudentSeries>,
    pub samples: Vec<Sample>,
}

impl TaskData {
    pub fn build(panel: &Panel, matrix: &FeatureMatrix, target: Target) -> Result<Self> {
        let mut series = Vec::new();
        let mut samples = Vec::new();
        for (sid, rows) in panel.by_student() {
            let s = series.len();
            for r in 0..rows.len().saturating_sub(1) {
                if rows[r + 1].excluded {
                    continue;
                }
                let fv = matrix.find(sid, rows[r].week).ok_or_else(|| {
                    EvalError::InvalidConfig(format!("feature row missing for {sid} {}", rows[r].week))
                })?;
                samples.push(Sample { student: s, origin: r, y: target.value(&rows[r + 1]), x: fv.imputed() });
            }
            series.push(StudentSeries {
                id: sid.to_string(),
                weeks: rows.iter().map(|r| r.week).collect(),
                values: rows.iter().map(|r| target.value(r)).collect(),
                excluded: rows.iter().map(|r| r.excluded).collect(),
            });
        }
        Ok(Self {
            target,
            feature_names: matrix.schema.names().into_iter().map(String::from).collect(),
            schema_hash: matrix.schema.hash(),
            series,
            samples,
        })
    }

    /// Same samples restricted to `columns` of the design.
    pub fn select_columns(&self, columns: &[usize], schema: &FeatureSchema) -> Self {
        Self {
            target: self.target,
            feature_names: schema.names().into_iter().map(String::from).collect(),
            schema_hash: schema.hash(),
            series: self.series.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample { x: columns.iter().map(|&c| s.x[c]).collect(), ..s.clone() })
                .collect(),
        }
    }

    pub fn student_id(&self, s: &Sample) -> &str {
        &self.series[s.student].id
    }

    pub fn origin_week(&self, s: &Sample) -> WeekId {
        self.series[s.student].weeks[s.origin]
    }

    pub fn target_week(&self, s: &Sample) -> WeekId {
        self.series[s.student].weeks[s.origin + 1]
    }

    pub fn history(&self, s: &Sample) -> &[f64] {
        &self.series[s.student].values[..=s.origin]
    }

    /// Cohort statistics for the heuristics from the training samples:
    /// their target values, plus each contributing student's first-week
    /// value when that row is not excluded.
    pub fn heuristic_stats(&self, train: &[&Sample]) -> Result<HeuristicStats> {
        let values: Vec<f64> = train.iter().map(|s| s.y).collect();
        let students: BTreeSet<usize> = train.iter().map(|s| s.student).collect();
        let first: Vec<f64> = students
            .iter()
            .map(|&s| &self.series[s])
            .filter(|ser| !ser.excluded[0])
            .map(|ser| ser.values[0])
            .collect();
        HeuristicStats::new(&values, &first).ok_or_else(|| EvalError::Empty("no training rows".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub student_id: String,
    pub week: WeekId,
    pub target_week: WeekId,
    /// 1-based position of the target week in the student's rows.
    pub target_index: usize,
    pub prediction: f64,
    pub truth: f64,
}

/// Predicts every sample passing `keep`, in `(student, week)` order.
pub fn forecast_loop<F: Fn(&Sample) -> bool>(model: &TrainedModel, data: &TaskData, keep: F) -> Result<Vec<Forecast>> {
    data.samples
        .iter()
        .filter(|s| keep(s))
        .map(|s| {
            let prediction = model.predict(ForecastInput {
                history: data.history(s),
                features: &s.x,
                schema_hash: &data.schema_hash,
            })?;
            Ok(Forecast {
                student_id: data.student_id(s).to_string(),
                week: data.origin_week(s),
                target_week: data.target_week(s),
                target_index: s.origin + 2,
                prediction,
                truth: s.y,
            })
        })
        .collect()
}

/// Everything a model needs to forecast one student from one origin week,
/// assembled from the panel and feature matrix the same way as the batch
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineInput {
    pub week: WeekId,
    pub next_week: WeekId,
    pub history: Vec<f64>,
    pub features: Vec<f64>,
    pub schema_hash: String,
}

impl OnlineInput {
    /// `week` defaults to the student's last row. Columns follow the model's
    /// feature names; heuristic models take none.
    pub fn build(
        panel: &Panel,
        matrix: &FeatureMatrix,
        target: Target,
        model: &TrainedModel,
        student: &str,
        week: Option<WeekId>,
    ) -> Result<Self> {
        let rows = panel.student(student).ok_or_else(|| EvalError::UnknownStudent(student.to_string()))?;
        let origin = match week {
            Some(w) => rows
                .iter()
                .position(|r| r.week == w)
                .ok_or(EvalError::UnknownWeek { student: student.to_string(), week: w })?,
            None => rows.len() - 1,
        };
        let week = rows[origin].week;
        let history = rows[..=origin].iter().map(|r| target.value(r)).collect();
        let (features, schema_hash) = if model.kind.is_heuristic() {
            (Vec::new(), String::new())
        } else {
            let fv = matrix
                .find(student, week)
                .ok_or_else(|| EvalError::InvalidConfig(format!("feature row missing for {student} {week}")))?;
            let cols = model
                .feature_names
                .iter()
                .map(|n| {
                    matrix.schema.index_of(n).ok_or_else(|| {
                        EvalError::Predictor(PredictorError::SchemaMismatch {
                            expected: model.schema_hash.clone(),
                            got: matrix.schema.hash(),
                        })
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let x = fv.imputed();
            (cols.iter().map(|&c| x[c]).collect(), matrix.schema.subset(&cols).hash())
        };
        Ok(Self { week, next_week: week.succ(), history, features, schema_hash })
    }

    pub fn predict(&self, model: &TrainedModel) -> Result<f64> {
        Ok(model.predict(ForecastInput {
            history: &self.history,
            features: &self.features,
            schema_hash: &self.schema_hash,
        })?)
    }
}

/// Fits `kind` on samples passing `train` (heuristics take cohort stats
/// from them) and forecasts samples passing `eval`.
pub fn train_and_forecast<T, E>(
    kind: PredictorKind,
    hp: &HyperParams,
    data: &TaskData,
    train: T,
    eval: E,
    seed: u64,
) -> Result<(TrainedModel, Vec<Forecast>)>
where
    T: Fn(&Sample) -> bool,
    E: Fn(&Sample) -> bool,
{
    let rows: Vec<&Sample> = data.samples.iter().filter(|s| train(s)).collect();
    if rows.is_empty() {
        return Err(EvalError::Empty(format!("no training rows for {kind}")));
    }
    let model = if kind.is_heuristic() {
        TrainedModel::heuristic(kind, data.heuristic_stats(&rows)?)?
    } else {
        let x: Vec<Vec<f64>> = rows.iter().map(|s| s.x.clone()).collect();
        let y: Vec<f64> = rows.iter().map(|s| s.y).collect();
        let design = DesignInfo { feature_names: &data.feature_names, schema_hash: &data.schema_hash };
        fit_supervised(kind, hp, &x, &y, design, seed)?
    };
    let fc = forecast_loop(&model, data, eval)?;
    Ok((model, fc))
}

pub fn forecast_mae(fc: &[Forecast]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = fc.iter().map(|f| (f.prediction, f.truth)).collect();
    Ok(stats::mae(&pairs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMae {
    /// Each student's last forecast row.
    pub final_week: f64,
    pub entire_sequence: f64,
    /// Rows whose target is the student's 9th week or later.
    pub from_week_9: Option<f64>,
}

pub const SEGMENT_START: usize = 9;

pub fn segment_mae(fc: &[Forecast]) -> Result<SegmentMae> {
    let entire_sequence = forecast_mae(fc)?;
    let mut last: BTreeMap<&str, &Forecast> = BTreeMap::new();
    for f in fc {
        let e = last.entry(f.student_id.as_str()).or_insert(f);
        if f.target_week > e.target_week {
            *e = f;
        }
    }
    let finals: Vec<(f64, f64)> = last.values().map(|f| (f.prediction, f.truth)).collect();
    let late: Vec<(f64, f64)> =
        fc.iter().filter(|f| f.target_index >= SEGMENT_START).map(|f| (f.prediction, f.truth)).collect();
    Ok(SegmentMae {
        final_week: stats::mae(&finals)?,
        entire_sequence,
        from_week_9: if late.is_empty() { None } else { Some(stats::mae(&late)?) },
    })
}

/// Mean of `prediction − truth` over rows from week 9 on.
pub fn mean_signed_error_from_week_9(fc: &[Forecast]) -> Option<f64> {
    let d: Vec<f64> =
        fc.iter().filter(|f| f.target_index >= SEGMENT_START).map(|f| f.prediction - f.truth).collect();
    stats::mean(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendWeek {
    pub week: WeekId,
    pub n: usize,
    pub truth_mean: f64,
    pub truth_std: f64,
    pub pred_mean: BTreeMap<String, f64>,
}

/// Per target week: truth mean and population std across students and
/// each model's mean prediction. Weeks without rows are absent.
pub fn weekly_trend(forecasts: &[(String, &[Forecast])]) -> Vec<TrendWeek> {
    let mut truth: BTreeMap<WeekId, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut preds: BTreeMap<WeekId, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for (model, fc) in forecasts {
        for f in fc.iter() {
            truth.entry(f.target_week).or_default().insert(f.student_id.as_str(), f.truth);
            preds.entry(f.target_week).or_default().entry(model.as_str()).or_default().push(f.prediction);
        }
    }
    truth
        .into_iter()
        .map(|(week, by_student)| {
            let t: Vec<f64> = by_student.values().copied().collect();
            TrendWeek {
                week,
                n: t.len(),
                truth_mean: stats::mean(&t).unwrap_or(0.0),
                truth_std: stats::population_std(&t).unwrap_or(0.0),
                pred_mean: preds[&week]
                    .iter()
                    .map(|(m, p)| (m.to_string(), stats::mean(p).unwrap_or(0.0)))
                    .collect(),
            }
        })
        .collect()
}

pub fn write_trend_csv<W: Write>(trend: &[TrendWeek], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["week", "truth_mean", "truth_std", "model", "pred_mean"])?;
    for t in trend {
        for (m, p) in &t.pred_mean {
            w.write_record([t.week.to_string(), t.truth_mean.to_string(), t.truth_std.to_string(), m.clone(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-student absolute-error sums and row counts.
fn per_student_errors(fc: &[Forecast]) -> BTreeMap<&str, (f64, usize)> {
    let mut m: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for f in fc {
        let e = m.entry(f.student_id.as_str()).or_default();
        e.0 += (f.prediction - f.truth).abs();
        e.1 += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub mae_model: f64,
    pub mae_comparator: f64,
    /// `(model − comparator) / comparator · 100`; negative is better.
    pub delta_pct: f64,
    /// Opposite sign: positive is an error reduction.
    pub error_reduction_pct: f64,
    /// Bootstrap over students of `MAE_model − MAE_comparator`.
    pub diff: BootstrapInterval<f64>,
    pub delta_pct_ci: [f64; 2],
    pub significant: bool,
}

/// Compares two forecast sets over the same `(student, week)` rows,
/// resampling students.
pub fn paired_comparison(model: &[Forecast], comparator: &[Forecast], cfg: &BootstrapConfig) -> Result<PairedComparison> {
    if model.len() != comparator.len()
        || model.iter().zip(comparator).any(|(a, b)| a.student_id != b.student_id || a.week != b.week)
    {
        return Err(EvalError::Unpaired(format!("{} vs {} rows", model.len(), comparator.len())));
    }
    let mae_model = forecast_mae(model)?;
    let mae_comparator = forecast_mae(comparator)?;
    let ea = per_student_errors(model);
    let eb = per_student_errors(comparator);
    let (diffs, weights): (Vec<f64>, Vec<f64>) = ea
        .iter()
        .map(|(s, &(sa, n))| ((sa - eb[s].0) / n as f64, n as f64))
        .unzip();
    let diff = stats::bootstrap_ci_weighted(&diffs, &weights, cfg)?;
    let delta_pct = stats::delta_pct(mae_model, mae_comparator)?;
    let scale = 100.0 / mae_comparator;
    Ok(PairedComparison {
        mae_model,
        mae_comparator,
        delta_pct,
        error_reduction_pct: -delta_pct,
        diff,
        delta_pct_ci: [diff.lower * scale, diff.upper * scale],
        significant: diff.excludes_zero(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub predictors: Vec<PredictorKind>,
    pub targets: Vec<Target>,
    pub split: SplitSpec,
    pub bootstrap: BootstrapConfig,
    pub hyperparams: BTreeMap<PredictorKind, HyperParams>,
    /// Comparators for Δ%; empty means every heuristic in `predictors`.
    pub comparators: Vec<PredictorKind>,
    /// Also sweep `HyperParams::grid` per supervised kind and run the
    /// Friedman test over it.
    pub hyperparameter_grid: bool,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            predictors: PredictorKind::implemented().collect(),
            targets: Target::ALL.to_vec(),
            split: SplitSpec::default(),
            bootstrap: BootstrapConfig::default(),
            hyperparams: BTreeMap::new(),
            comparators: Vec::new(),
            hyperparameter_grid: false,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.bootstrap.validate()?;
        if self.predictors.is_empty() || self.targets.is_empty() {
            return Err(EvalError::InvalidConfig("need at least one predictor and one target".into()));
        }
        for k in &self.predictors {
            if !k.is_implemented() {
                return Err(PredictorError::NotImplemented(*k).into());
            }
        }
        for (k, hp) in &self.hyperparams {
            hp.validate(*k)?;
        }
        Ok(())
    }

    pub fn hp(&self, kind: PredictorKind) -> HyperParams {
        self.hyperparams.get(&kind).cloned().unwrap_or_default()
    }

    fn comparator_list(&self) -> Vec<PredictorKind> {
        if self.comparators.is_empty() {
            self.predictors.iter().copied().filter(|k| k.is_heuristic()).collect()
        } else {
            self.comparators.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorResult {
    pub kind: PredictorKind,
    pub target: Target,
    pub family: Family,
    pub hyperparams: HyperParams,
    pub n_rows: usize,
    pub mae: f64,
    pub segments: SegmentMae,
    pub mean_signed_error_from_week_9: Option<f64>,
    /// Validation MAE per CV fold.
    pub cv_mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: PredictorKind,
    pub comparator: PredictorKind,
    pub target: Target,
    #[serde(flatten)]
    pub stats: PairedComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyComparison {
    pub target: Target,
    pub family_a: Family,
    pub family_b: Family,
    /// Per-student MAE averaged over each family's members; `a − b`.
    pub stats: ComparisonStats<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanEntry {
    /// `"predictors"` across kinds, or a kind name across its grid.
    pub scope: String,
    /// Blocks are (target, fold) pairs.
    pub blocks: Vec<String>,
    pub configurations: Vec<String>,
    pub result: FriedmanResult<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestHeuristic {
    pub target: Target,
    pub kind: PredictorKind,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: BenchmarkConfig,
    pub schema_hash: String,
    pub n_dev_students: usize,
    pub n_holdout_students: usize,
    pub folds: Vec<CvFold>,
    pub start_quartiles: Option<StartQuartiles>,
    pub results: Vec<PredictorResult>,
    pub best_heuristic: Vec<BestHeuristic>,
    pub comparisons: Vec<ComparisonRow>,
    pub trends: BTreeMap<Target, Vec<TrendWeek>>,
    pub family_comparisons: Vec<FamilyComparison>,
    pub friedman: Vec<FriedmanEntry>,
    pub importance: BTreeMap<Target, Vec<ImportanceTable>>,
}

impl EvalReport {
    pub fn result(&self, kind: PredictorKind, target: Target) -> Option<&PredictorResult> {
        self.results.iter().find(|r| r.kind == kind && r.target == target)
    }

    pub fn comparison(&self, kind: PredictorKind, comparator: PredictorKind, target: Target) -> Option<&ComparisonRow> {
        self.comparisons
            .iter()
            .find(|c| c.kind == kind && c.comparator == comparator && c.target == target)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// target, predictor, MAE, and Δ% against the best heuristic.
    pub fn write_table2_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", "predictor", "mae", "best_heuristic", "delta_pct", "ci_lower", "ci_upper", "significant"])?;
        for r in &self.results {
            let best = self.best_heuristic.iter().find(|b| b.target == r.target);
            let cmp = best.and_then(|b| self.comparison(r.kind, b.kind, r.target));
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.target.as_str().to_string(),
                r.kind.as_str().to_string(),
                r.mae.to_string(),
                best.map(|b| b.kind.as_str().to_string()).unwrap_or_default(),
                fmt(cmp.map(|c| c.stats.delta_pct)),
                fmt(cmp.map(|c| c.stats.delta_pct_ci[0])),
                fmt(cmp.map(|c| c.stats.delta_pct_ci[1])),
                cmp.map(|c| c.stats.significant.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// target, predictor and the three segment MAEs.
    pub fn write_table4_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", "predictor", "final_week", "entire_sequence", "from_week_9"])?;
        for r in &self.results {
            w.write_record([
                r.target.as_str().to_string(),
                r.kind.as_str().to_string(),
                r.segments.final_week.to_string(),
                r.segments.entire_sequence.to_string(),
                r.segments.from_week_9.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a benchmark run produces.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub report: EvalReport,
    /// Holdout-protocol models, trained on all development students.
    pub models: BTreeMap<(Target, PredictorKind), TrainedModel>,
    pub forecasts: BTreeMap<(Target, PredictorKind), Vec<Forecast>>,
    pub matrix: FeatureMatrix,
    pub dev: BTreeSet<String>,
    pub holdout: BTreeSet<String>,
}

/// Which rows a job trains and evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Fold(usize),
    Holdout,
}

struct Job {
    target: Target,
    kind: PredictorKind,
    hp_index: usize,
    phase: Phase,
}

/// The student split, start quartiles, feature matrix and CV folds a
/// benchmark run uses.
#[derive(Debug, Clone)]
pub struct Design {
    pub dev: BTreeSet<String>,
    pub holdout: BTreeSet<String>,
    pub quartiles: Option<StartQuartiles>,
    pub matrix: FeatureMatrix,
    pub folds: Vec<CvFold>,
}

pub fn design(
    panel: &Panel,
    afm: &BTreeMap<(String, WeekId), LearnerState>,
    features: &FeatureConfig,
    cfg: &BenchmarkConfig,
) -> Result<Design> {
    let students = panel.students();
    let split = SplitSpec { seed: derive_seed(cfg.seed ^ cfg.split.seed, "split"), ..cfg.split };
    let (dev, holdout) = student_split(&students, &split)?;
    assert!(dev.is_disjoint(&holdout), "development and holdout students overlap");
    let quartiles = StartQuartiles::fit(panel, &dev, features);
    let matrix = build_matrix(panel, afm, quartiles.as_ref(), features)?;
    let dev_weeks: Vec<WeekId> = panel.rows.iter().filter(|r| dev.contains(&r.student_id)).map(|r| r.week).collect();
    let folds = timeseries_cv(&dev_weeks, cfg.split.cv_folds)?;
    Ok(Design { dev, holdout, quartiles, matrix, folds })
}

/// Full protocol: split, start-quartile fit on development students,
/// CV folds on development students, holdout retrain and scoring.
pub fn run_benchmark(
    panel: &Panel,
    afm: &BTreeMap<(String, WeekId), LearnerState>,
    features: &FeatureConfig,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let Design { dev, holdout, quartiles, matrix, folds } = design(panel, afm, features, cfg)?;

    let data: BTreeMap<Target, TaskData> = cfg
        .targets
        .iter()
        .map(|&t| Ok((t, TaskData::build(panel, &matrix, t)?)))
        .collect::<Result<_>>()?;

    let grids: BTreeMap<PredictorKind, Vec<HyperParams>> = cfg
        .predictors
        .iter()
        .map(|&k| {
            let mut v = vec![cfg.hp(k)];
            if cfg.hyperparameter_grid && k.is_supervised() {
                for g in HyperParams::grid(k) {
                    let mut merged = cfg.hp(k);
                    merged.0.extend(g.0);
                    if !v.contains(&merged) {
                        v.push(merged);
                    }
                }
            }
            (k, v)
        })
        .collect();

    let mut jobs = Vec::new();
    for &target in &cfg.targets {
        for &kind in &cfg.predictors {
            for hp_index in 0..grids[&kind].len() {
                for f in &folds {
                    jobs.push(Job { target, kind, hp_index, phase: Phase::Fold(f.fold) });
                }
                if hp_index == 0 {
                    jobs.push(Job { target, kind, hp_index, phase: Phase::Holdout });
                }
            }
        }
    }

    let outputs: Vec<(TrainedModel, Vec<Forecast>)> = jobs
        .par_iter()
        .map(|job| {
            let d = &data[&job.target];
            let hp = &grids[&job.kind][job.hp_index];
            let label = format!("{}/{}/{:?}", job.target.as_str(), job.kind, job.phase);
            let seed = derive_seed(cfg.seed, &label);
            match job.phase {
                Phase::Fold(j) => {
                    let f = folds[j - 1];
                    train_and_forecast(
                        job.kind,
                        hp,
                        d,
                        |s| dev.contains(d.student_id(s)) && f.trains_on(d.target_week(s)),
                        |s| dev.contains(d.student_id(s)) && f.validates_on(d.target_week(s)),
                        seed,
                    )
                }
                Phase::Holdout => train_and_forecast(
                    job.kind,
                    hp,
                    d,
                    |s| dev.contains(d.student_id(s)),
                    |s| holdout.contains(d.student_id(s)),
                    seed,
                ),
            }
        })
        .collect::<Result<_>>()?;

    let mut fold_mae: BTreeMap<(Target, PredictorKind, usize), Vec<f64>> = BTreeMap::new();
    let mut fold_models: BTreeMap<(Target, PredictorKind), Vec<TrainedModel>> = BTreeMap::new();
    let mut models = BTreeMap::new();
    let mut forecasts = BTreeMap::new();
    for (job, (model, fc)) in jobs.iter().zip(outputs) {
        match job.phase {
            Phase::Fold(_) => {
                fold_mae
                    .entry((job.target, job.kind, job.hp_index))
                    .or_default()
                    .push(forecast_mae(&fc)?);
                if job.hp_index == 0 {
                    fold_models.entry((job.target, job.kind)).or_default().push(model);
                }
            }
            Phase::Holdout => {
                models.insert((job.target, job.kind), model);
                forecasts.insert((job.target, job.kind), fc);
            }
        }
    }

    let mut results = Vec::new();
    for &target in &cfg.targets {
        for &kind in &cfg.predictors {
            let fc = &forecasts[&(target, kind)];
            results.push(PredictorResult {
                kind,
                target,
                family: kind.family(),
                hyperparams: grids[&kind][0].clone(),
                n_rows: fc.len(),
                mae: forecast_mae(fc)?,
                segments: segment_mae(fc)?,
                mean_signed_error_from_week_9: mean_signed_error_from_week_9(fc),
                cv_mae: fold_mae[&(target, kind, 0)].clone(),
            });
        }
    }

    let best_heuristic: Vec<BestHeuristic> = cfg
        .targets
        .iter()
        .filter_map(|&t| {
            results
                .iter()
                .filter(|r| r.target == t && r.kind.is_heuristic())
                .min_by(|a, b| a.mae.total_cmp(&b.mae).then(a.kind.cmp(&b.kind)))
                .map(|r| BestHeuristic { target: t, kind: r.kind, mae: r.mae })
        })
        .collect();

    let comparators = cfg.comparator_list();
    let mut pairs = Vec::new();
    for &target in &cfg.targets {
        for &kind in &cfg.predictors {
            for &c in &comparators {
                if c != kind && forecasts.contains_key(&(target, c)) {
                    pairs.push((target, kind, c));
                }
            }
        }
    }
    let comparisons: Vec<ComparisonRow> = pairs
        .par_iter()
        .map(|&(target, kind, comparator)| {
            let boot = BootstrapConfig {
                seed: derive_seed(cfg.bootstrap.seed ^ cfg.seed, &format!("boot/{}/{kind}/{comparator}", target.as_str())),
                ..cfg.bootstrap
            };
            let stats = paired_comparison(&forecasts[&(target, kind)], &forecasts[&(target, comparator)], &boot)?;
            Ok(ComparisonRow { kind, comparator, target, stats })
        })
        .collect::<Result<_>>()?;

    let mut trends = BTreeMap::new();
    for &target in &cfg.targets {
        let series: Vec<(String, &[Forecast])> = cfg
            .predictors
            .iter()
            .map(|&k| (k.as_str().to_string(), forecasts[&(target, k)].as_slice()))
            .collect();
        trends.insert(target, weekly_trend(&series));
    }

    let family_comparisons = family_stats(cfg, &forecasts)?;
    let friedman = friedman_entries(cfg, &grids, &fold_mae)?;

    let mut importance = BTreeMap::new();
    for &target in &cfg.targets {
        let mut tables = Vec::new();
        for &kind in &cfg.predictors {
            let Some(ms) = fold_models.get(&(target, kind)) else { continue };
            let vecs: std::result::Result<Vec<_>, _> = ms.iter().map(explain::importance).collect();
            if let Ok(v) = vecs {
                tables.push(ImportanceTable::aggregate(kind, &matrix.schema, &v)?);
            }
        }
        importance.insert(target, tables);
    }

    let report = EvalReport {
        config: cfg.clone(),
        schema_hash: matrix.schema.hash(),
        n_dev_students: dev.len(),
        n_holdout_students: holdout.len(),
        folds,
        start_quartiles: quartiles,
        results,
        best_heuristic,
        comparisons,
        trends,
        family_comparisons,
        friedman,
        importance,
    };
    Ok(BenchmarkOutput { report, models, forecasts, matrix, dev, holdout })
}

fn family_stats(
    cfg: &BenchmarkConfig,
    forecasts: &BTreeMap<(Target, PredictorKind), Vec<Forecast>>,
) -> Result<Vec<FamilyComparison>> {
    let fams = [Family::Heuristic, Family::Linear, Family::Tree, Family::Neural];
    let mut out = Vec::new();
    for &target in &cfg.targets {
        let mut per_family: Vec<(Family, BTreeMap<String, f64>)> = Vec::new();
        for fam in fams {
            let members: Vec<PredictorKind> = cfg.predictors.iter().copied().filter(|k| k.family() == fam).collect();
            if members.is_empty() {
                continue;
            }
            let mut acc: BTreeMap<String, f64> = BTreeMap::new();
            for k in &members {
                for (s, (sum, n)) in per_student_errors(&forecasts[&(target, *k)]) {
                    *acc.entry(s.to_string()).or_default() += sum / n as f64 / members.len() as f64;
                }
            }
            per_family.push((fam, acc));
        }
        for i in 0..per_family.len() {
            for j in i + 1..per_family.len() {
                let (fa, a) = &per_family[i];
                let (fb, b) = &per_family[j];
                let va: Vec<f64> = a.values().copied().collect();
                let vb: Vec<f64> = b.values().copied().collect();
                if va.len() < 2 || a.keys().ne(b.keys()) {
                    continue;
                }
                let boot = BootstrapConfig {
                    seed: derive_seed(cfg.seed, &format!("family/{}/{fa:?}/{fb:?}", target.as_str())),
                    ..cfg.bootstrap
                };
                out.push(FamilyComparison {
                    target,
                    family_a: *fa,
                    family_b: *fb,
                    stats: stats::compare_stats(&va, &vb, &boot)?,
                });
            }
        }
    }
    Ok(out)
}

fn friedman_entries(
    cfg: &BenchmarkConfig,
    grids: &BTreeMap<PredictorKind, Vec<HyperParams>>,
    fold_mae: &BTreeMap<(Target, PredictorKind, usize), Vec<f64>>,
) -> Result<Vec<FriedmanEntry>> {
    let n_folds = cfg.split.cv_folds;
    let blocks: Vec<String> = cfg
        .targets
        .iter()
        .flat_map(|t| (1..=n_folds).map(move |f| format!("{}/fold{f}", t.as_str())))
        .collect();
    let row = |kind: PredictorKind, hp: usize| -> Vec<f64> {
        cfg.targets.iter().flat_map(|&t| fold_mae[&(t, kind, hp)].iter().copied()).collect()
    };
    let mut out = Vec::new();
    if cfg.predictors.len() >= 2 && blocks.len() >= 2 {
        let scores: Vec<Vec<f64>> = cfg.predictors.iter().map(|&k| row(k, 0)).collect();
        if let Ok(result) = stats::friedman_kendall(&scores) {
            out.push(FriedmanEntry {
                scope: "predictors".into(),
                blocks: blocks.clone(),
                configurations: cfg.predictors.iter().map(|k| k.as_str().to_string()).collect(),
                result,
            });
        }
    }
    for &kind in &cfg.predictors {
        let grid = &grids[&kind];
        if grid.len() < 2 || blocks.len() < 2 {
            continue;
        }
        let scores: Vec<Vec<f64>> = (0..grid.len()).map(|h| row(kind, h)).collect();
        match stats::friedman_kendall(&scores) {
            Ok(result) => out.push(FriedmanEntry {
                scope: kind.as_str().to_string(),
                blocks: blocks.clone(),
                configurations: grid.iter().map(|h| serde_json::to_string(h).expect("json")).collect(),
                result,
            }),
            Err(StatsError::DegenerateBlocks(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}
