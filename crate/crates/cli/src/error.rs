use std::path::Path;

use serde_json::json;

/// Failure with a stable code, printed as JSON on stderr.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("invalid_config", message)
    }

    /// Reading an input artifact failed.
    pub fn input(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new("missing_input", format!("{}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.code == "invalid_config" {
            2
        } else {
            1
        }
    }
}

impl From<engagecast_core::Error> for CliError {
    fn from(e: engagecast_core::Error) -> Self {
        use engagecast_core::features::FeatureError;
        use engagecast_core::predictors::PredictorError;
        let code = match &e {
            engagecast_core::Error::Predictor(PredictorError::SchemaMismatch { .. })
            | engagecast_core::Error::Feature(FeatureError::Malformed(_)) => "schema_mismatch",
            other => other.code(),
        };
        Self::new(code, e.to_string())
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                engagecast_core::Error::from(e).into()
            }
        }
    )*};
}

via_core!(
    engagecast_core::eval::EvalError,
    engagecast_core::explain::ExplainError,
    engagecast_core::ingest::IngestError,
    engagecast_core::afm::AfmError,
    engagecast_core::features::FeatureError,
    engagecast_core::synth::InvalidConfig,
    engagecast_core::stats::StatsError
);

impl From<engagecast_service::ServiceError> for CliError {
    fn from(e: engagecast_service::ServiceError) -> Self {
        use engagecast_service::ServiceError;
        let code = match &e {
            ServiceError::Data(engagecast_service::data::DataError::SchemaMismatch { .. }) => "schema_mismatch",
            ServiceError::Data(engagecast_service::data::DataError::Io { .. }) => "missing_input",
            ServiceError::Data(_) | ServiceError::Scenario(_) => "invalid_input",
            ServiceError::Store(_) | ServiceError::Io(_) => "io",
        };
        Self::new(code, e.to_string())
    }
}
