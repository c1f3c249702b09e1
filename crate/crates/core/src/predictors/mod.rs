//! The predictor registry: eight history heuristics and six supervised
//! regressors behind one fit/predict contract.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod heuristic;
pub mod linear;
pub mod mlp;
pub mod tree;

pub use heuristic::{predict_adams, predict_heuristic, AdamsConfig, HeuristicStats};
pub use linear::{LinearModel, Standardizer};
pub use mlp::MlpModel;
pub use tree::{Boost, Forest, TreeNode};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("schema mismatch: model expects {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("dataset statistics are required for ADAMS predictors")]
    MissingDatasetStats,
    #[error("invalid hyperparameters for {kind}: {reason}")]
    InvalidHyperParams { kind: PredictorKind, reason: String },
    #[error("{0} is not implemented")]
    NotImplemented(PredictorKind),
    #[error("{0} is not a supervised predictor")]
    NotSupervised(PredictorKind),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown predictor `{0}`")]
    UnknownKind(String),
}

pub type Result<T> = std::result::Result<T, PredictorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PredictorKind {
    LastValue,
    MedianAll,
    MedianNonzero,
    MeanAll,
    MeanNonzero,
    AdamsP50,
    AdamsP60,
    AdamsP70,
    Ols,
    Ridge,
    Lasso,
    RandomForest,
    GradientBoost,
    Mlp,
    /// Reserved slot; always reported as not implemented.
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Heuristic,
    Linear,
    Tree,
    Neural,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 15] = [
        Self::LastValue,
        Self::MedianAll,
        Self::MedianNonzero,
        Self::MeanAll,
        Self::MeanNonzero,
        Self::AdamsP50,
        Self::AdamsP60,
        Self::AdamsP70,
        Self::Ols,
        Self::Ridge,
        Self::Lasso,
        Self::RandomForest,
        Self::GradientBoost,
        Self::Mlp,
        Self::Lstm,
    ];

    pub fn implemented() -> impl Iterator<Item = PredictorKind> {
        Self::ALL.into_iter().filter(|k| k.is_implemented())
    }

    pub fn is_implemented(self) -> bool {
        self != Self::Lstm
    }

    pub fn is_heuristic(self) -> bool {
        matches!(
            self,
            Self::LastValue
                | Self::MedianAll
                | Self::MedianNonzero
                | Self::MeanAll
                | Self::MeanNonzero
                | Self::AdamsP50
                | Self::AdamsP60
                | Self::AdamsP70
        )
    }

    pub fn is_supervised(self) -> bool {
        !self.is_heuristic()
    }

    pub fn family(self) -> Family {
        match self {
            Self::Ols | Self::Ridge | Self::Lasso => Family::Linear,
            Self::RandomForest | Self::GradientBoost => Family::Tree,
            Self::Mlp | Self::Lstm => Family::Neural,
            _ => Family::Heuristic,
        }
    }

    pub fn adams_percentile(self) -> Option<f64> {
        match self {
            Self::AdamsP50 => Some(50.0),
            Self::AdamsP60 => Some(60.0),
            Self::AdamsP70 => Some(70.0),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LastValue => "LAST_VALUE",
            Self::MedianAll => "MEDIAN_ALL",
            Self::MedianNonzero => "MEDIAN_NONZERO",
            Self::MeanAll => "MEAN_ALL",
            Self::MeanNonzero => "MEAN_NONZERO",
            Self::AdamsP50 => "ADAMS_P50",
            Self::AdamsP60 => "ADAMS_P60",
            Self::AdamsP70 => "ADAMS_P70",
            Self::Ols => "OLS",
            Self::Ridge => "RIDGE",
            Self::Lasso => "LASSO",
            Self::RandomForest => "RANDOM_FOREST",
            Self::GradientBoost => "GRADIENT_BOOST",
            Self::Mlp => "MLP",
            Self::Lstm => "LSTM",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = PredictorError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| PredictorError::UnknownKind(s.to_string()))
    }
}

/// Per-kind knob values. Missing keys take the kind's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParams(pub BTreeMap<String, f64>);

impl HyperParams {
    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn get_or(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    pub fn known_keys(kind: PredictorKind) -> &'static [&'static str] {
        match kind {
            PredictorKind::Ridge => &["lambda"],
            PredictorKind::Lasso => &["lambda", "tolerance", "max_iter"],
            PredictorKind::RandomForest => &["n_trees", "max_depth", "min_samples_leaf", "max_features", "max_bins"],
            PredictorKind::GradientBoost => {
                &["n_trees", "max_depth", "learning_rate", "subsample", "min_samples_leaf", "max_bins"]
            }
            PredictorKind::Mlp => &[
                "layers",
                "hidden_units",
                "epochs",
                "learning_rate",
                "batch_size",
                "patience",
                "alpha",
                "validation_fraction",
            ],
            _ => &[],
        }
    }

    /// The declared three-value sweep used for within-family comparisons.
    pub fn grid(kind: PredictorKind) -> Vec<HyperParams> {
        let sweep = |key: &str, vals: [f64; 3]| vals.iter().map(|&v| HyperParams::default().with(key, v)).collect();
        match kind {
            PredictorKind::Ridge => sweep("lambda", [0.1, 1.0, 10.0]),
            PredictorKind::Lasso => sweep("lambda", [0.001, 0.01, 0.1]),
            PredictorKind::RandomForest => sweep("max_depth", [6.0, 12.0, 18.0]),
            PredictorKind::GradientBoost => sweep("learning_rate", [0.025, 0.05, 0.1]),
            PredictorKind::Mlp => sweep("hidden_units", [32.0, 64.0, 128.0]),
            _ => vec![HyperParams::default()],
        }
    }

    pub fn validate(&self, kind: PredictorKind) -> Result<()> {
        let bad = |reason: String| Err(PredictorError::InvalidHyperParams { kind, reason });
        let known = Self::known_keys(kind);
        for (k, v) in &self.0 {
            if !known.contains(&k.as_str()) {
                return bad(format!("unknown key `{k}`"));
            }
            if !v.is_finite() {
                return bad(format!("`{k}` must be finite"));
            }
        }
        let nonneg = ["lambda", "alpha", "n_trees"];
        let pos = ["tolerance", "max_iter", "max_depth", "min_samples_leaf", "epochs", "batch_size", "layers", "hidden_units"];
        for (k, v) in &self.0 {
            if nonneg.contains(&k.as_str()) && *v < 0.0 {
                return bad(format!("`{k}` must be ≥ 0"));
            }
            if pos.contains(&k.as_str()) && *v < 1.0 && k != "tolerance" {
                return bad(format!("`{k}` must be ≥ 1"));
            }
            if k == "tolerance" && *v <= 0.0 {
                return bad("`tolerance` must be > 0".into());
            }
        }
        for key in ["subsample", "max_features", "learning_rate"] {
            if let Some(&v) = self.0.get(key) {
                if !(v > 0.0 && v <= 1.0) {
                    return bad(format!("`{key}` must lie in (0, 1]"));
                }
            }
        }
        if let Some(&v) = self.0.get("validation_fraction") {
            if !(0.0..0.5).contains(&v) {
                return bad("`validation_fraction` must lie in [0, 0.5)".into());
            }
        }
        if let Some(&v) = self.0.get("max_bins") {
            if !(2.0..=256.0).contains(&v) {
                return bad("`max_bins` must lie in [2, 256]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum ModelPayload {
    Heuristic(HeuristicStats),
    Linear(LinearModel),
    Forest(Forest),
    Boost(Boost),
    Mlp(MlpModel),
}

/// A fitted predictor in its serialized envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: PredictorKind,
    pub hyperparams: HyperParams,
    pub schema_hash: String,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub payload: ModelPayload,
}

/// What a forecast at week `t` may look at: the target's history up to `t`
/// and the imputed feature row for `t`.
#[derive(Debug, Clone, Copy)]
pub struct ForecastInput<'a> {
    pub history: &'a [f64],
    pub features: &'a [f64],
    pub schema_hash: &'a str,
}

impl TrainedModel {
    pub fn heuristic(kind: PredictorKind, stats: HeuristicStats) -> Result<Self> {
        if !kind.is_heuristic() {
            return Err(PredictorError::NotSupervised(kind));
        }
        Ok(Self {
            version: MODEL_VERSION,
            kind,
            hyperparams: HyperParams::default(),
            schema_hash: String::new(),
            feature_names: Vec::new(),
            seed: 0,
            payload: ModelPayload::Heuristic(stats),
        })
    }

    /// Nonnegative, finite one-step forecast.
    pub fn predict(&self, input: ForecastInput<'_>) -> Result<f64> {
        let raw = match &self.payload {
            ModelPayload::Heuristic(stats) => match self.kind.adams_percentile() {
                Some(p) => predict_adams(&AdamsConfig::new(p), input.history, Some(stats))?,
                None => predict_heuristic(self.kind, input.history, stats),
            },
            other => {
                if input.schema_hash != self.schema_hash {
                    return Err(PredictorError::SchemaMismatch {
                        expected: self.schema_hash.clone(),
                        got: input.schema_hash.to_string(),
                    });
                }
                if input.features.len() != self.feature_names.len() {
                    return Err(PredictorError::Shape(format!(
                        "expected {} features, got {}",
                        self.feature_names.len(),
                        input.features.len()
                    )));
                }
                match other {
                    ModelPayload::Linear(m) => m.predict_row(input.features),
                    ModelPayload::Forest(m) => m.predict_row(input.features),
                    ModelPayload::Boost(m) => m.predict_row(input.features),
                    ModelPayload::Mlp(m) => m.predict_row(input.features),
                    ModelPayload::Heuristic(_) => unreachable!(),
                }
            }
        };
        Ok(clamp_prediction(raw))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model envelope serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn clamp_prediction(v: f64) -> f64 {
    if v.is_finite() {
        v.max(0.0)
    } else {
        0.0
    }
}

/// Column names and hash of the design a supervised model is fitted on.
#[derive(Debug, Clone, Copy)]
pub struct DesignInfo<'a> {
    pub feature_names: &'a [String],
    pub schema_hash: &'a str,
}

/// Fits a supervised kind on an imputed design matrix.
pub fn fit_supervised(
    kind: PredictorKind,
    hp: &HyperParams,
    x: &[Vec<f64>],
    y: &[f64],
    design: DesignInfo<'_>,
    seed: u64,
) -> Result<TrainedModel> {
    if !kind.is_implemented() {
        return Err(PredictorError::NotImplemented(kind));
    }
    if kind.is_heuristic() {
        return Err(PredictorError::NotSupervised(kind));
    }
    hp.validate(kind)?;
    if x.len() != y.len() || x.is_empty() {
        return Err(PredictorError::Shape(format!("{} rows vs {} targets", x.len(), y.len())));
    }
    if x.iter().any(|r| r.len() != design.feature_names.len()) {
        return Err(PredictorError::Shape("row width differs from feature count".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(PredictorError::DegenerateDesign("non-finite input".into()));
    }
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Err(PredictorError::DegenerateDesign("target has zero variance".into()));
    }
    let payload = match kind {
        PredictorKind::Ols => ModelPayload::Linear(linear::fit_ridge(x, y, linear::OLS_JITTER)?),
        PredictorKind::Ridge => ModelPayload::Linear(linear::fit_ridge(x, y, hp.get_or("lambda", 1.0))?),
        PredictorKind::Lasso => ModelPayload::Linear(
            linear::fit_lasso(
                x,
                y,
                hp.get_or("lambda", 0.01),
                hp.get_or("tolerance", 1e-6),
                hp.get_or("max_iter", 10_000.0) as usize,
            )?
            .0,
        ),
        PredictorKind::RandomForest => ModelPayload::Forest(tree::fit_forest(x, y, &tree::ForestParams::from_hp(hp), seed)),
        PredictorKind::GradientBoost => {
            ModelPayload::Boost(tree::fit_boost(x, y, &tree::BoostParams::from_hp(hp), seed).0)
        }
        PredictorKind::Mlp => ModelPayload::Mlp(mlp::fit_mlp(x, y, &mlp::MlpParams::from_hp(hp), seed)?),
        _ => unreachable!(),
    };
    Ok(TrainedModel {
        version: MODEL_VERSION,
        kind,
        hyperparams: hp.clone(),
        schema_hash: design.schema_hash.to_string(),
        feature_names: design.feature_names.to_vec(),
        seed,
        payload,
    })
}

/// Raw importances: |standardized coefficient| for linear models, summed
/// split gain for tree ensembles. `None` for other payloads.
pub fn raw_importance(model: &TrainedModel) -> Option<Vec<f64>> {
    match &model.payload {
        ModelPayload::Linear(m) => Some(m.coef.iter().map(|c| c.abs()).collect()),
        ModelPayload::Forest(m) => Some(tree::split_gains(&m.trees, model.feature_names.len())),
        ModelPayload::Boost(m) => Some(tree::split_gains(&m.trees, model.feature_names.len())),
        _ => None,
    }
}
