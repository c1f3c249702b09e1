//! Per student-week feature rows in four groups: AFM learner state,
//! engagement activity, practice gaps and prior achievement.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::afm::LearnerState;
use crate::ingest::{Panel, StudentWeek};
use crate::stats;
use crate::week::WeekId;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureGroup {
    Afm,
    Activity,
    Gaps,
    Prior,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [Self::Afm, Self::Activity, Self::Gaps, Self::Prior];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Afm => "AFM",
            Self::Activity => "ACTIVITY",
            Self::Gaps => "GAPS",
            Self::Prior => "PRIOR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.as_str().eq_ignore_ascii_case(s))
    }
}

/// Current-week raw measures kept in every ablation condition.
pub const BASE_FEATURES: [&str; 4] = ["minutes_current", "skills_current", "problems_current", "opportunities_current"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub lags: Vec<usize>,
    pub gap_lookback: usize,
    pub early_window: usize,
    pub late_window: usize,
    pub change_window: usize,
    /// Weeks of skill totals that define the start quartile.
    pub start_weeks: usize,
    /// Emit a `lag{k}_missing` column per lag.
    pub missing_indicators: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            lags: vec![1, 2, 3, 4, 8, 12, 16],
            gap_lookback: 3,
            early_window: 3,
            late_window: 3,
            change_window: 4,
            start_weeks: 3,
            missing_indicators: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.lags.iter().any(|&l| l == 0) || self.lags.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lags must be positive and strictly increasing");
        }
        if self.gap_lookback == 0 || self.early_window == 0 || self.late_window == 0 {
            return bad("windows must be ≥ 1");
        }
        if self.change_window == 0 || self.start_weeks == 0 {
            return bad("change_window and start_weeks must be ≥ 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub group: FeatureGroup,
    /// Whether the raw value can be MISSING and is imputed.
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

const MEASURES: [&str; 4] = ["minutes", "problems", "opportunities", "skills"];
const CHANGE_MEASURES: [&str; 3] = ["minutes", "problems", "skills"];

impl FeatureSchema {
    pub fn for_config(cfg: &FeatureConfig) -> Self {
        let mut f = Vec::new();
        let mut push = |name: String, group, imputed| f.push(FeatureSpec { name, group, imputed });
        use FeatureGroup::*;
        for m in MEASURES {
            push(format!("{m}_current"), Activity, false);
        }
        push("skills_cum_current".into(), Activity, false);
        for &k in &cfg.lags {
            for m in MEASURES {
                push(format!("{m}_lag{k}"), Activity, true);
            }
        }
        if cfg.missing_indicators {
            for &k in &cfg.lags {
                push(format!("lag{k}_missing"), Activity, false);
            }
        }
        for m in CHANGE_MEASURES {
            push(format!("recent_change_{m}"), Activity, true);
            push(format!("recent_change_{m}_mean"), Activity, true);
        }
        for s in ["mean", "std", "range", "iqr"] {
            push(format!("minutes_{s}"), Activity, false);
        }
        for s in ["mean", "sum", "std"] {
            push(format!("problems_{s}"), Activity, false);
        }
        push("has_recent_gap".into(), Gaps, false);
        push("weeks_since_gap".into(), Gaps, false);
        push("gap_count".into(), Gaps, false);
        push("start_quartile".into(), Prior, true);
        push("consistency_score".into(), Prior, true);
        push("improvement".into(), Prior, true);
        push("student_ability".into(), Afm, true);
        push("student_learning_rate".into(), Afm, true);
        push("student_week_difficulty".into(), Afm, true);
        Self { features: f }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn group_of(&self, name: &str) -> Option<FeatureGroup> {
        self.index_of(name).map(|i| self.features[i].group)
    }

    /// SHA-256 over `name:GROUP` lines; identifies the column layout.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update(b":");
            h.update(f.group.as_str().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Sub-schema of the listed column indices, in the given order.
    pub fn subset(&self, columns: &[usize]) -> Self {
        Self { features: columns.iter().map(|&c| self.features[c].clone()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub student_id: String,
    pub week: WeekId,
    /// Aligned with the schema; `None` is MISSING.
    pub values: Vec<Option<f64>>,
}

impl FeatureVector {
    pub fn imputed(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn get(&self, row: usize, name: &str) -> Option<Option<f64>> {
        self.schema.index_of(name).map(|c| self.rows[row].values[c])
    }

    pub fn find(&self, student: &str, week: WeekId) -> Option<&FeatureVector> {
        self.rows
            .binary_search_by(|r| (r.student_id.as_str(), r.week).cmp(&(student, week)))
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Dense imputed design matrix (MISSING → 0).
    pub fn imputed(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(FeatureVector::imputed).collect()
    }

    pub fn select_columns(&self, columns: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            schema: self.schema.subset(columns),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureVector {
                    student_id: r.student_id.clone(),
                    week: r.week,
                    values: columns.iter().map(|&c| r.values[c]).collect(),
                })
                .collect(),
        }
    }

    /// CSV with `student_id,week,<features>`; MISSING is an empty cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["student_id", "week"];
        header.extend(self.schema.names());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.student_id.clone(), r.week.to_string()];
            rec.extend(r.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, schema: FeatureSchema) -> Result<FeatureMatrix> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<&str> = ["student_id", "week"].into_iter().chain(schema.names()).collect();
        if header != expected {
            return Err(FeatureError::Malformed("header does not match schema".into()));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let week = rec[1].parse().map_err(|e| FeatureError::Malformed(format!("{e}")))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|e| FeatureError::Malformed(format!("`{c}`: {e}")))
                    }
                })
                .collect::<Result<_>>()?;
            rows.push(FeatureVector { student_id: rec[0].to_string(), week, values });
        }
        Ok(FeatureMatrix { schema, rows })
    }

    /// Sidecar JSON: feature name → group and imputation flag, plus the hash.
    pub fn schema_json(&self) -> serde_json::Value {
        let features: BTreeMap<&str, serde_json::Value> = self
            .schema
            .features
            .iter()
            .map(|f| (f.name.as_str(), serde_json::json!({ "group": f.group, "imputed": f.imputed })))
            .collect();
        serde_json::json!({
            "order": self.schema.names(),
            "features": features,
            "schema_hash": self.schema.hash(),
        })
    }
}

/// `1 / (1 + CV)` of weekly new-skill counts; `None` below two weeks.
pub fn consistency_score(history: &[f64]) -> Option<f64> {
    if history.len() < 2 {
        return None;
    }
    let mean = stats::mean(history)?;
    if mean == 0.0 {
        return Some(0.0);
    }
    let sd = stats::population_std(history)?;
    Some(1.0 / (1.0 + sd / mean.abs()))
}

/// Quartile boundaries of early skill totals, fitted on one student set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartQuartiles {
    pub cuts: [f64; 3],
}

impl StartQuartiles {
    pub fn from_totals(totals: &[f64]) -> Option<Self> {
        let s = stats::sorted(totals);
        if s.is_empty() {
            return None;
        }
        let q = |p: f64| stats::quantile_sorted(&s, p);
        Some(Self { cuts: [q(0.25), q(0.5), q(0.75)] })
    }

    /// Fits on the listed students that have at least `start_weeks` rows.
    pub fn fit(panel: &Panel, students: &BTreeSet<String>, cfg: &FeatureConfig) -> Option<Self> {
        let totals: Vec<f64> = panel
            .by_student()
            .into_iter()
            .filter(|(s, rows)| students.contains(*s) && rows.len() >= cfg.start_weeks)
            .map(|(_, rows)| rows[..cfg.start_weeks].iter().map(|r| r.y_skill).sum())
            .collect();
        Self::from_totals(&totals)
    }

    /// 1..=4; values on a cut go to the lower quartile.
    pub fn assign(&self, total: f64) -> u8 {
        1 + self.cuts.iter().filter(|&&c| total > c).count() as u8
    }
}

pub fn start_quartile(totals: &[f64]) -> Vec<u8> {
    match StartQuartiles::from_totals(totals) {
        Some(q) => totals.iter().map(|&t| q.assign(t)).collect(),
        None => Vec::new(),
    }
}

/// Builds rows for every panel student-week. Each row uses only that
/// student's rows up to and including its week.
pub fn build_matrix(
    panel: &Panel,
    afm: &BTreeMap<(String, WeekId), LearnerState>,
    quartiles: Option<&StartQuartiles>,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let schema = FeatureSchema::for_config(cfg);
    let mut rows = Vec::with_capacity(panel.rows.len());
    for (student, hist) in panel.by_student() {
        for r in 0..hist.len() {
            let values = row_values(student, &hist[..=r], afm, quartiles, cfg);
            debug_assert_eq!(values.len(), schema.len());
            rows.push(FeatureVector { student_id: student.to_string(), week: hist[r].week, values });
        }
    }
    Ok(FeatureMatrix { schema, rows })
}

fn measure(row: &StudentWeek, m: &str) -> f64 {
    match m {
        "minutes" => row.minutes,
        "problems" => row.problems as f64,
        "opportunities" => row.opportunities as f64,
        "skills" => row.y_skill,
        _ => unreachable!("unknown measure {m}"),
    }
}

fn row_values(
    student: &str,
    hist: &[StudentWeek],
    afm: &BTreeMap<(String, WeekId), LearnerState>,
    quartiles: Option<&StartQuartiles>,
    cfg: &FeatureConfig,
) -> Vec<Option<f64>> {
    let r = hist.len() - 1;
    let cur = &hist[r];
    let mut v: Vec<Option<f64>> = Vec::with_capacity(64);
    for m in MEASURES {
        v.push(Some(measure(cur, m)));
    }
    v.push(Some(cur.skills_cum as f64));
    for &k in &cfg.lags {
        for m in MEASURES {
            v.push((r >= k).then(|| measure(&hist[r - k], m)));
        }
    }
    if cfg.missing_indicators {
        for &k in &cfg.lags {
            v.push(Some(if r >= k { 0.0 } else { 1.0 }));
        }
    }
    for m in CHANGE_MEASURES {
        if r == 0 {
            v.extend([None, None]);
        } else {
            let w = cfg.change_window.min(r);
            v.push(Some(measure(cur, m) - measure(&hist[r - 1], m)));
            v.push(Some((measure(cur, m) - measure(&hist[r - w], m)) / w as f64));
        }
    }

    let minutes: Vec<f64> = hist.iter().map(|h| h.minutes).collect();
    let sorted = stats::sorted(&minutes);
    v.push(stats::mean(&minutes));
    v.push(stats::population_std(&minutes));
    v.push(Some(sorted[sorted.len() - 1] - sorted[0]));
    v.push(Some(stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25)));
    let problems: Vec<f64> = hist.iter().map(|h| h.problems as f64).collect();
    v.push(stats::mean(&problems));
    v.push(Some(problems.iter().sum()));
    v.push(stats::population_std(&problems));

    let recent_start = (r + 1).saturating_sub(cfg.gap_lookback);
    let has_recent = minutes[recent_start..].iter().any(|&m| m == 0.0);
    let last_zero = minutes.iter().rposition(|&m| m == 0.0);
    v.push(Some(if has_recent { 1.0 } else { 0.0 }));
    v.push(Some(match last_zero {
        Some(z) => (r - z) as f64,
        None => (r + 1) as f64,
    }));
    v.push(Some(minutes.iter().filter(|&&m| m == 0.0).count() as f64));

    let skills: Vec<f64> = hist.iter().map(|h| h.y_skill).collect();
    v.push(match quartiles {
        Some(q) if skills.len() >= cfg.start_weeks => Some(q.assign(skills[..cfg.start_weeks].iter().sum()) as f64),
        _ => None,
    });
    v.push(consistency_score(&skills));
    v.push((skills.len() >= 2).then(|| {
        let n = skills.len();
        let early = &skills[..cfg.early_window.min(n)];
        let late = &skills[n - cfg.late_window.min(n)..];
        stats::mean(late).unwrap_or(0.0) - stats::mean(early).unwrap_or(0.0)
    }));

    let state = afm.get(&(student.to_string(), cur.week)).copied().unwrap_or_default();
    v.push(state.ability);
    v.push(state.learning_rate);
    v.push(state.week_difficulty);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn panel_from(student: &str, minutes: &[f64], skills: &[f64]) -> Panel {
        let first: WeekId = "2011-W01".parse().unwrap();
        let mut cum = 0.0;
        let rows = minutes
            .iter()
            .zip(skills)
            .enumerate()
            .map(|(i, (&m, &s))| {
                cum += s;
                StudentWeek {
                    student_id: student.into(),
                    week: first.offset(i as i64),
                    minutes: m,
                    problems: (m / 5.0).round() as u32,
                    opportunities: (m / 2.0).round() as u32,
                    skills_cum: cum as u32,
                    y_min: m,
                    y_skill: s,
                    excluded: false,
                }
            })
            .collect();
        Panel { rows }
    }

    fn col(m: &FeatureMatrix, row: usize, name: &str) -> Option<f64> {
        m.get(row, name).unwrap_or_else(|| panic!("no column {name}"))
    }

    #[test]
    fn schema_partitions_into_groups() {
        let s = FeatureSchema::for_config(&FeatureConfig::default());
        let names: BTreeSet<&str> = s.names().into_iter().collect();
        assert_eq!(names.len(), s.len());
        for b in BASE_FEATURES {
            assert_eq!(s.group_of(b), Some(FeatureGroup::Activity));
        }
        for g in FeatureGroup::ALL {
            assert!(s.features.iter().any(|f| f.group == g));
        }
        assert_eq!(s.len(), 5 + 28 + 7 + 6 + 7 + 3 + 3 + 3);
        assert_eq!(s.hash(), FeatureSchema::for_config(&FeatureConfig::default()).hash());
        let mut other = FeatureConfig::default();
        other.lags = vec![1, 2];
        assert_ne!(s.hash(), FeatureSchema::for_config(&other).hash());
    }

    #[test]
    fn first_week_has_empty_history() {
        let p = panel_from("s", &[12.0, 7.0], &[1.0, 0.0]);
        let m = build_matrix(&p, &BTreeMap::new(), None, &FeatureConfig::default()).unwrap();
        assert_eq!(col(&m, 0, "minutes_lag1"), None);
        assert_eq!(col(&m, 0, "lag1_missing"), Some(1.0));
        assert_eq!(col(&m, 0, "gap_count"), Some(0.0));
        assert_eq!(col(&m, 0, "recent_change_minutes"), None);
        assert_eq!(col(&m, 1, "minutes_lag1"), Some(12.0));
        assert_eq!(col(&m, 1, "lag1_missing"), Some(0.0));
        assert!(m.imputed().iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn gap_example() {
        let p = panel_from("s", &[10.0, 0.0, 0.0, 5.0], &[0.0; 4]);
        let m = build_matrix(&p, &BTreeMap::new(), None, &FeatureConfig::default()).unwrap();
        assert_eq!(col(&m, 3, "gap_count"), Some(2.0));
        assert_eq!(col(&m, 3, "weeks_since_gap"), Some(1.0));
        assert_eq!(col(&m, 3, "has_recent_gap"), Some(1.0));
        assert_eq!(col(&m, 0, "has_recent_gap"), Some(0.0));
        assert_eq!(col(&m, 2, "weeks_since_gap"), Some(0.0));
    }

    #[test]
    fn six_week_fixture() {
        // Hand computation for the last row (week 6):
        // minutes 10 20 0 30 40 20; skills 1 3 0 2 2 4
        let p = panel_from("s", &[10.0, 20.0, 0.0, 30.0, 40.0, 20.0], &[1.0, 3.0, 0.0, 2.0, 2.0, 4.0]);
        let q = StartQuartiles { cuts: [2.0, 4.0, 6.0] };
        let mut afm = BTreeMap::new();
        let w6: WeekId = "2011-W06".parse().unwrap();
        afm.insert(
            ("s".to_string(), w6),
            LearnerState { ability: Some(0.4), learning_rate: Some(0.1), week_difficulty: Some(-1.2) },
        );
        let m = build_matrix(&p, &afm, Some(&q), &FeatureConfig::default()).unwrap();
        let r = 5;
        let expect: &[(&str, Option<f64>)] = &[
            ("minutes_current", Some(20.0)),
            ("problems_current", Some(4.0)),
            ("opportunities_current", Some(10.0)),
            ("skills_current", Some(4.0)),
            ("skills_cum_current", Some(12.0)),
            ("minutes_lag1", Some(40.0)),
            ("minutes_lag4", Some(20.0)),
            ("skills_lag3", Some(0.0)),
            ("minutes_lag8", None),
            ("lag4_missing", Some(0.0)),
            ("lag8_missing", Some(1.0)),
            ("recent_change_minutes", Some(-20.0)),
            // (20 − 20) / 4
            ("recent_change_minutes_mean", Some(0.0)),
            // (4 − 3) / 4
            ("recent_change_skills_mean", Some(0.25)),
            ("minutes_mean", Some(20.0)),
            // deviations −10 0 −20 10 20 0 → Σsq 1000 / 6
            ("minutes_std", Some((1000.0f64 / 6.0).sqrt())),
            ("minutes_range", Some(40.0)),
            // sorted 0 10 20 20 30 40: q1 at 1.25 → 12.5, q3 at 3.75 → 27.5
            ("minutes_iqr", Some(15.0)),
            // problems 2 4 0 6 8 4
            ("problems_sum", Some(24.0)),
            ("problems_mean", Some(4.0)),
            ("has_recent_gap", Some(0.0)),
            ("weeks_since_gap", Some(3.0)),
            ("gap_count", Some(1.0)),
            // first three skills total 4 → second quartile
            ("start_quartile", Some(2.0)),
            // mean 2, population std sqrt(10/6)
            ("consistency_score", Some(1.0 / (1.0 + (10.0f64 / 6.0).sqrt() / 2.0))),
            // late 2 2 4 → 8/3, early 1 3 0 → 4/3
            ("improvement", Some(4.0 / 3.0)),
            ("student_ability", Some(0.4)),
            ("student_learning_rate", Some(0.1)),
            ("student_week_difficulty", Some(-1.2)),
        ];
        for &(name, want) in expect {
            let got = col(&m, r, name);
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "{name}: {g} vs {w}"),
                _ => assert_eq!(got, want, "{name}"),
            }
        }
        assert_eq!(col(&m, 1, "start_quartile"), None);
        assert_eq!(col(&m, 4, "student_ability"), None);
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(consistency_score(&[3.0, 3.0, 3.0]), Some(1.0));
        assert_eq!(consistency_score(&[0.0, 0.0]), Some(0.0));
        assert_eq!(consistency_score(&[2.0, 4.0]), Some(0.75));
        assert_eq!(consistency_score(&[2.0]), None);
    }

    #[test]
    fn quartile_examples() {
        assert_eq!(start_quartile(&[1.0, 2.0, 3.0, 4.0]), vec![1, 2, 3, 4]);
        assert_eq!(start_quartile(&[5.0; 6]), vec![1; 6]);
        let q = StartQuartiles::from_totals(&[3.0, 5.0, 9.0]).unwrap();
        assert_eq!(q.assign(-1.0), 1);
        assert_eq!(q.assign(100.0), 4);
    }

    #[test]
    fn csv_round_trip() {
        let p = panel_from("s", &[10.0, 0.0, 7.5], &[1.0, 0.0, 2.0]);
        let m = build_matrix(&p, &BTreeMap::new(), None, &FeatureConfig::default()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice(), m.schema.clone()).unwrap();
        assert_eq!(back, m);
        let js = m.schema_json();
        assert_eq!(js["features"]["gap_count"]["group"], "GAPS");
        assert_eq!(js["features"]["minutes_lag1"]["imputed"], true);
    }
}
