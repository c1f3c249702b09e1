//! Feature importance, group weights, rank agreement and the feature-group
//! ablation grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::{self, Forecast, PairedComparison, TaskData};
use crate::features::{FeatureGroup, FeatureSchema, BASE_FEATURES};
use crate::predictors::{raw_importance, HyperParams, PredictorKind, TrainedModel};
use crate::stats::{self, BootstrapConfig};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("importance is unavailable for {0}")]
    UnsupportedKind(PredictorKind),
    #[error("schema mismatch across importance vectors")]
    SchemaMismatch,
    #[error("no shared keys to rank")]
    EmptyIntersection,
    #[error("condition {0} selects no features")]
    EmptyFeatureSet(AblationCondition),
    #[error("no importance vectors to aggregate")]
    NoVectors,
    #[error("unknown ablation condition `{0}`")]
    UnknownCondition(String),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// Feature name → raw importance, in schema order.
pub fn importance(model: &TrainedModel) -> Result<Vec<(String, f64)>> {
    let raw = raw_importance(model).ok_or(ExplainError::UnsupportedKind(model.kind))?;
    Ok(model.feature_names.iter().cloned().zip(raw).collect())
}

/// Scales to unit sum. An all-zero vector becomes uniform.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    if raw.is_empty() {
        return Vec::new();
    }
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / raw.len() as f64; raw.len()];
    }
    raw.iter().map(|v| v.abs() / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub kind: PredictorKind,
    pub feature_names: Vec<String>,
    pub feature_groups: Vec<FeatureGroup>,
    /// One normalized vector per fold, in `feature_names` order.
    pub folds: Vec<Vec<f64>>,
    /// Per-feature mean over folds.
    pub aggregate: BTreeMap<String, f64>,
    pub groups: BTreeMap<FeatureGroup, f64>,
}

impl ImportanceTable {
    /// Averages normalized per-fold vectors; group weights sum member
    /// features.
    pub fn aggregate(kind: PredictorKind, schema: &FeatureSchema, folds: &[Vec<(String, f64)>]) -> Result<Self> {
        let Some(first) = folds.first() else {
            return Err(ExplainError::NoVectors);
        };
        let names: Vec<String> = first.iter().map(|(n, _)| n.clone()).collect();
        if folds.iter().any(|f| f.len() != names.len() || f.iter().zip(&names).any(|((a, _), b)| a != b)) {
            return Err(ExplainError::SchemaMismatch);
        }
        if names.iter().any(|n| schema.index_of(n).is_none()) {
            return Err(ExplainError::SchemaMismatch);
        }
        let normalized: Vec<Vec<f64>> = folds
            .iter()
            .map(|f| normalize(&f.iter().map(|(_, v)| *v).collect::<Vec<_>>()))
            .collect();
        let feature_groups: Vec<FeatureGroup> =
            names.iter().map(|n| schema.group_of(n).expect("checked above")).collect();
        let mut aggregate = BTreeMap::new();
        let mut groups: BTreeMap<FeatureGroup, f64> = FeatureGroup::ALL.iter().map(|&g| (g, 0.0)).collect();
        for (j, name) in names.iter().enumerate() {
            let mean = normalized.iter().map(|v| v[j]).sum::<f64>() / normalized.len() as f64;
            aggregate.insert(name.clone(), mean);
            *groups.get_mut(&feature_groups[j]).expect("all groups present") += mean;
        }
        Ok(Self { kind, feature_names: names, feature_groups, folds: normalized, aggregate, groups })
    }

    pub fn top_k(&self, k: usize) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.aggregate.iter().map(|(n, &w)| (n.as_str(), w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v.truncate(k);
        v
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "feature", "group", "importance"])?;
        for (name, g) in self.feature_names.iter().zip(&self.feature_groups) {
            w.write_record([self.kind.as_str(), name, g.as_str(), &self.aggregate[name].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankLevel {
    Feature,
    Group,
}

/// Kendall's τ-b between two tables' importance rankings over shared keys.
pub fn rank_agreement(a: &ImportanceTable, b: &ImportanceTable, level: RankLevel) -> Result<f64> {
    let (xa, xb): (Vec<f64>, Vec<f64>) = match level {
        RankLevel::Feature => a
            .aggregate
            .iter()
            .filter_map(|(k, &v)| b.aggregate.get(k).map(|&w| (v, w)))
            .unzip(),
        RankLevel::Group => a.groups.iter().filter_map(|(k, &v)| b.groups.get(k).map(|&w| (v, w))).unzip(),
    };
    if xa.is_empty() {
        return Err(ExplainError::EmptyIntersection);
    }
    Ok(stats::kendall_tau_b(&xa, &xb)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AblationCondition {
    Full,
    BaseOnly,
    BasePlus(FeatureGroup),
    AllExcept(FeatureGroup),
}

impl AblationCondition {
    /// FULL, BASE_ONLY, then BASE_PLUS and ALL_EXCEPT for every group.
    pub fn standard_grid() -> Vec<Self> {
        let mut v = vec![Self::Full, Self::BaseOnly];
        v.extend(FeatureGroup::ALL.iter().map(|&g| Self::BasePlus(g)));
        v.extend(FeatureGroup::ALL.iter().map(|&g| Self::AllExcept(g)));
        v
    }

    /// Column indices kept; BASE columns are never removed.
    pub fn columns(self, schema: &FeatureSchema) -> Result<Vec<usize>> {
        let base: BTreeSet<&str> = BASE_FEATURES.into_iter().collect();
        let cols: Vec<usize> = schema
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                let is_base = base.contains(f.name.as_str());
                match self {
                    Self::Full => true,
                    Self::BaseOnly => is_base,
                    Self::BasePlus(g) => is_base || f.group == g,
                    Self::AllExcept(g) => is_base || f.group != g,
                }
            })
            .map(|(i, _)| i)
            .collect();
        if cols.is_empty() {
            return Err(ExplainError::EmptyFeatureSet(self));
        }
        Ok(cols)
    }
}

impl fmt::Display for AblationCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("FULL"),
            Self::BaseOnly => f.write_str("BASE_ONLY"),
            Self::BasePlus(g) => write!(f, "BASE_PLUS({})", g.as_str()),
            Self::AllExcept(g) => write!(f, "ALL_EXCEPT({})", g.as_str()),
        }
    }
}

impl FromStr for AblationCondition {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let inner = |prefix: &str| {
            t.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .and_then(FeatureGroup::parse)
        };
        match t.as_str() {
            "FULL" => Ok(Self::Full),
            "BASE_ONLY" => Ok(Self::BaseOnly),
            _ => inner("BASE_PLUS")
                .map(Self::BasePlus)
                .or_else(|| inner("ALL_EXCEPT").map(Self::AllExcept))
                .ok_or_else(|| ExplainError::UnknownCondition(s.to_string())),
        }
    }
}

impl Serialize for AblationCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AblationCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: AblationCondition,
    pub n_features: usize,
    pub mae: f64,
    /// Versus FULL on the same forecast rows.
    pub vs_full: PairedComparison,
}

/// Inputs shared by every condition of one grid.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    pub data: &'a TaskData,
    pub schema: &'a FeatureSchema,
    pub dev: &'a BTreeSet<String>,
    pub holdout: &'a BTreeSet<String>,
    pub kind: PredictorKind,
    pub hyperparams: HyperParams,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
}

/// Retrains `kind` on the development students for each condition's columns
/// (same seed everywhere) and scores the holdout students against FULL.
pub fn ablation_grid(setup: &AblationSetup<'_>, conditions: &[AblationCondition]) -> Result<Vec<AblationRow>> {
    use rayon::prelude::*;
    let mut all = vec![AblationCondition::Full];
    all.extend(conditions.iter().copied().filter(|c| *c != AblationCondition::Full));
    let runs: Vec<(AblationCondition, usize, Vec<Forecast>)> = all
        .par_iter()
        .map(|&c| {
            let cols = c.columns(setup.schema)?;
            let sub = setup.data.select_columns(&cols, &setup.schema.subset(&cols));
            let (_, fc) = eval::train_and_forecast(
                setup.kind,
                &setup.hyperparams,
                &sub,
                |s| setup.dev.contains(sub.student_id(s)),
                |s| setup.holdout.contains(sub.student_id(s)),
                setup.seed,
            )?;
            Ok((c, cols.len(), fc))
        })
        .collect::<Result<_>>()?;
    let full = &runs[0].2;
    let mut out = Vec::new();
    for (c, n, fc) in &runs {
        if !conditions.contains(c) && *c != AblationCondition::Full {
            continue;
        }
        let vs_full = eval::paired_comparison(fc, full, &setup.bootstrap)?;
        out.push(AblationRow { condition: *c, n_features: *n, mae: vs_full.mae_model, vs_full });
    }
    Ok(out)
}

pub fn write_ablation_csv<W: std::io::Write>(rows: &[AblationRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "n_features", "mae", "delta_pct", "ci_lower", "ci_upper", "significant"])?;
    for r in rows {
        w.write_record([
            r.condition.to_string(),
            r.n_features.to_string(),
            r.mae.to_string(),
            r.vs_full.delta_pct.to_string(),
            r.vs_full.delta_pct_ci[0].to_string(),
            r.vs_full.delta_pct_ci[1].to_string(),
            r.vs_full.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::predictors::{DesignInfo, ModelPayload, TreeNode, MODEL_VERSION};
    use crate::predictors::{Boost, LinearModel, Standardizer};

    fn linear_model(coef: Vec<f64>) -> TrainedModel {
        let p = coef.len();
        TrainedModel {
            version: MODEL_VERSION,
            kind: PredictorKind::Ridge,
            hyperparams: HyperParams::default(),
            schema_hash: String::new(),
            feature_names: (0..p).map(|i| format!("f{i}")).collect(),
            seed: 0,
            payload: ModelPayload::Linear(LinearModel {
                standardizer: Standardizer { mean: vec![0.0; p], scale: vec![1.0; p] },
                intercept: 0.0,
                coef,
            }),
        }
    }

    #[test]
    fn linear_importance_uses_absolute_values() {
        let imp = importance(&linear_model(vec![2.0, -2.0])).unwrap();
        let n = normalize(&imp.iter().map(|x| x.1).collect::<Vec<_>>());
        assert_eq!(n, vec![0.5, 0.5]);
    }

    #[test]
    fn stump_puts_everything_on_its_feature() {
        let leaf = |v| Box::new(TreeNode::Leaf { value: v, samples: 5 });
        let stump = TreeNode::Split { feature: 1, threshold: 0.5, gain: 3.0, samples: 10, left: leaf(0.0), right: leaf(1.0) };
        let model = TrainedModel {
            kind: PredictorKind::GradientBoost,
            payload: ModelPayload::Boost(Boost { base: 0.0, learning_rate: 0.1, trees: vec![stump] }),
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            ..linear_model(vec![0.0; 3])
        };
        let n = normalize(&importance(&model).unwrap().iter().map(|x| x.1).collect::<Vec<_>>());
        assert_eq!(n, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_tree_hand_summed_gains() {
        let leaf = |v| Box::new(TreeNode::Leaf { value: v, samples: 2 });
        let t1 = TreeNode::Split {
            feature: 0,
            threshold: 1.0,
            gain: 4.0,
            samples: 8,
            left: Box::new(TreeNode::Split { feature: 2, threshold: 0.0, gain: 1.5, samples: 4, left: leaf(0.0), right: leaf(1.0) }),
            right: leaf(2.0),
        };
        let t2 = TreeNode::Split { feature: 2, threshold: 3.0, gain: 2.5, samples: 8, left: leaf(0.0), right: leaf(1.0) };
        let model = TrainedModel {
            kind: PredictorKind::RandomForest,
            payload: ModelPayload::Forest(crate::predictors::Forest { trees: vec![t1, t2] }),
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            ..linear_model(vec![0.0; 3])
        };
        let raw: Vec<f64> = importance(&model).unwrap().iter().map(|x| x.1).collect();
        assert_eq!(raw, vec![4.0, 0.0, 4.0]);
    }

    #[test]
    fn heuristics_and_mlp_are_unsupported() {
        let stats = crate::predictors::HeuristicStats::new(&[1.0], &[1.0]).unwrap();
        let h = TrainedModel::heuristic(PredictorKind::LastValue, stats).unwrap();
        assert!(matches!(importance(&h), Err(ExplainError::UnsupportedKind(PredictorKind::LastValue))));
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let hp = HyperParams::default().with("epochs", 2.0);
        let m = crate::predictors::fit_supervised(
            PredictorKind::Mlp,
            &hp,
            &x,
            &y,
            DesignInfo { feature_names: &names, schema_hash: "h" },
            1,
        )
        .unwrap();
        assert!(matches!(importance(&m), Err(ExplainError::UnsupportedKind(PredictorKind::Mlp))));
    }

    fn schema() -> FeatureSchema {
        FeatureSchema::for_config(&FeatureConfig::default())
    }

    fn one_hot(schema: &FeatureSchema, hot: usize) -> Vec<(String, f64)> {
        schema.features.iter().enumerate().map(|(i, f)| (f.name.clone(), if i == hot { 1.0 } else { 0.0 })).collect()
    }

    #[test]
    fn aggregate_examples() {
        let s = schema();
        let a = one_hot(&s, 0);
        let same = ImportanceTable::aggregate(PredictorKind::Ridge, &s, &[a.clone(), a.clone()]).unwrap();
        let single = ImportanceTable::aggregate(PredictorKind::Ridge, &s, &[a.clone()]).unwrap();
        assert_eq!(same.aggregate, single.aggregate);
        let b = one_hot(&s, 7);
        let t = ImportanceTable::aggregate(PredictorKind::Ridge, &s, &[a, b]).unwrap();
        assert_eq!(t.aggregate[&s.features[0].name], 0.5);
        assert_eq!(t.aggregate[&s.features[7].name], 0.5);
        let gsum: f64 = t.groups.values().sum();
        assert!((gsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_mismatched_folds() {
        let s = schema();
        let a = one_hot(&s, 0);
        let mut b = a.clone();
        b.swap(0, 1);
        assert!(matches!(
            ImportanceTable::aggregate(PredictorKind::Ridge, &s, &[a, b]),
            Err(ExplainError::SchemaMismatch)
        ));
        assert!(matches!(ImportanceTable::aggregate(PredictorKind::Ridge, &s, &[]), Err(ExplainError::NoVectors)));
    }

    fn table(weights: &[(&str, f64)]) -> ImportanceTable {
        ImportanceTable {
            kind: PredictorKind::Ridge,
            feature_names: weights.iter().map(|w| w.0.to_string()).collect(),
            feature_groups: vec![FeatureGroup::Activity; weights.len()],
            folds: vec![],
            aggregate: weights.iter().map(|&(n, w)| (n.to_string(), w)).collect(),
            groups: FeatureGroup::ALL.iter().enumerate().map(|(i, &g)| (g, i as f64)).collect(),
        }
    }

    #[test]
    fn rank_agreement_examples() {
        let a = table(&[("a", 0.4), ("b", 0.3), ("c", 0.2), ("d", 0.1)]);
        let rev = table(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4)]);
        assert!((rank_agreement(&a, &a, RankLevel::Feature).unwrap() - 1.0).abs() < 1e-12);
        assert!((rank_agreement(&a, &rev, RankLevel::Feature).unwrap() + 1.0).abs() < 1e-12);
        assert!((rank_agreement(&a, &rev, RankLevel::Group).unwrap() - 1.0).abs() < 1e-12);
        let other = table(&[("x", 1.0)]);
        assert!(matches!(rank_agreement(&a, &other, RankLevel::Feature), Err(ExplainError::EmptyIntersection)));
    }

    #[test]
    fn rank_agreement_matches_pair_count_on_eight_items() {
        let wa = [0.30, 0.05, 0.12, 0.12, 0.08, 0.2, 0.03, 0.1];
        let wb = [0.25, 0.10, 0.10, 0.15, 0.05, 0.2, 0.05, 0.1];
        let names = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let ta = table(&names.iter().zip(wa).map(|(&n, w)| (n, w)).collect::<Vec<_>>());
        let tb = table(&names.iter().zip(wb).map(|(&n, w)| (n, w)).collect::<Vec<_>>());
        // brute force τ-b
        let (mut c, mut d, mut tx, mut ty) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..8 {
            for j in i + 1..8 {
                let sx = (wa[i] - wa[j]).partial_cmp(&0.0).unwrap() as i32;
                let sy = (wb[i] - wb[j]).partial_cmp(&0.0).unwrap() as i32;
                match (sx, sy) {
                    (0, 0) => {}
                    (0, _) => tx += 1.0,
                    (_, 0) => ty += 1.0,
                    _ if sx == sy => c += 1.0,
                    _ => d += 1.0,
                }
            }
        }
        let expect = (c - d) / ((c + d + tx) * (c + d + ty) as f64).sqrt();
        assert!((rank_agreement(&ta, &tb, RankLevel::Feature).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn condition_columns() {
        let s = schema();
        let full = AblationCondition::Full.columns(&s).unwrap();
        assert_eq!(full.len(), s.len());
        let base = AblationCondition::BaseOnly.columns(&s).unwrap();
        assert_eq!(base.len(), BASE_FEATURES.len());
        let no_activity = AblationCondition::AllExcept(FeatureGroup::Activity).columns(&s).unwrap();
        for b in BASE_FEATURES {
            assert!(no_activity.contains(&s.index_of(b).unwrap()));
        }
        assert!(!no_activity.contains(&s.index_of("skills_cum_current").unwrap()));
        let plus_gaps = AblationCondition::BasePlus(FeatureGroup::Gaps).columns(&s).unwrap();
        assert!(plus_gaps.len() > base.len());
        let empty = FeatureSchema { features: vec![] };
        assert!(matches!(AblationCondition::BaseOnly.columns(&empty), Err(ExplainError::EmptyFeatureSet(_))));
    }

    #[test]
    fn condition_strings_round_trip() {
        for c in AblationCondition::standard_grid() {
            assert_eq!(c.to_string().parse::<AblationCondition>().unwrap(), c);
            let js = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<AblationCondition>(&js).unwrap(), c);
        }
        assert_eq!("all_except(gaps)".parse::<AblationCondition>().unwrap(), AblationCondition::AllExcept(FeatureGroup::Gaps));
        assert!("NONE".parse::<AblationCondition>().is_err());
    }
}
