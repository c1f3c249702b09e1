//! Weekly engagement forecasting from tutoring-system interaction logs.
//!
//! The pipeline runs ingest → AFM learner model → feature matrix →
//! predictors → evaluation and explanation. Numeric kernels are generic over
//! [`Scalar`]; the aliases below fix the working precision for the pipeline.

pub mod afm;
pub mod eval;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod predictors;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod week;

use sha2::{Digest, Sha256};

pub use scalar::Scalar;
pub use week::WeekId;

/// Working precision of the pipeline.
pub type Real = f64;
pub type AfmParams = afm::AfmParams<Real>;
pub type BootstrapInterval = stats::BootstrapInterval<Real>;
pub type FriedmanResult = stats::FriedmanResult<Real>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Afm(#[from] afm::AfmError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Predictor(#[from] predictors::PredictorError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Explain(#[from] explain::ExplainError),
    #[error(transparent)]
    Synth(#[from] synth::InvalidConfig),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Ingest(_) => "ingest",
            Self::Afm(_) => "afm",
            Self::Feature(_) => "features",
            Self::Predictor(_) => "predictor",
            Self::Stats(_) => "stats",
            Self::Eval(_) => "eval",
            Self::Explain(_) => "explain",
            Self::Synth(_) => "synth",
            Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}

/// Child seed for a labelled stage: the first eight bytes of
/// `sha256(root ‖ label)`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Lowercase hex sha256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
