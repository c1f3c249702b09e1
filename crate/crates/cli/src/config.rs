use std::path::{Path, PathBuf};

use engagecast_core::afm::AfmConfig;
use engagecast_core::derive_seed;
use engagecast_core::eval::{BenchmarkConfig, Target};
use engagecast_core::explain::AblationCondition;
use engagecast_core::features::FeatureConfig;
use engagecast_core::ingest::IngestConfig;
use engagecast_core::pipeline::PrepareConfig;
use engagecast_core::predictors::PredictorKind;
use engagecast_core::synth::RegimeConfig;
use engagecast_service::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20240611;

/// Artifact locations. Unset entries resolve to fixed names under the
/// output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub learner_state: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub kind: PredictorKind,
    pub targets: Vec<Target>,
    pub conditions: Vec<AblationCondition>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::GradientBoost,
            targets: Target::ALL.to_vec(),
            conditions: AblationCondition::standard_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub top_k: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self { top_k: 15 }
    }
}

/// Everything a run depends on. Stage seeds are overwritten from `seed` by
/// [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: RegimeConfig,
    pub ingest: IngestConfig,
    pub afm: AfmConfig,
    pub features: FeatureConfig,
    pub benchmark: BenchmarkConfig,
    pub ablation: AblationConfig,
    pub importance: ImportanceConfig,
    pub service: ServiceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            paths: Paths::default(),
            synth: RegimeConfig::default(),
            ingest: IngestConfig::default(),
            afm: AfmConfig::default(),
            features: FeatureConfig::default(),
            benchmark: BenchmarkConfig::default(),
            ablation: AblationConfig::default(),
            importance: ImportanceConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Derives every stage seed from the root and validates the parts.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.synth.seed = self.seed;
        self.benchmark.seed = derive_seed(self.seed, "benchmark");
        self.service.session_seed = derive_seed(self.seed, "session");
        self.synth.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.ingest.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.afm.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.features.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.benchmark.validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.ablation.targets.is_empty() || self.importance.top_k == 0 {
            return Err(CliError::config("ablation needs a target and importance a positive top_k"));
        }
        Ok(self)
    }

    pub fn prepare(&self) -> PrepareConfig {
        PrepareConfig { ingest: self.ingest.clone(), afm: self.afm.clone(), seed: derive_seed(self.seed, "afm") }
    }

    pub fn ablation_seed(&self) -> u64 {
        derive_seed(self.seed, "ablation")
    }
}

/// Fixed artifact names inside the output directory.
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn events(&self, cfg: &RunConfig) -> PathBuf {
        cfg.paths.events.clone().unwrap_or_else(|| self.file("events.csv"))
    }

    pub fn panel(&self, cfg: &RunConfig) -> PathBuf {
        cfg.paths.panel.clone().unwrap_or_else(|| self.file("panel.csv"))
    }

    pub fn learner_state(&self, cfg: &RunConfig) -> PathBuf {
        cfg.paths.learner_state.clone().unwrap_or_else(|| self.file("learner_state.json"))
    }

    pub fn report(&self, cfg: &RunConfig) -> PathBuf {
        cfg.paths.report.clone().unwrap_or_else(|| self.file("reports/benchmark.json"))
    }

    pub fn reports(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn models(&self) -> PathBuf {
        self.out.join("models")
    }

    pub fn model(&self, target: Target, kind: PredictorKind) -> PathBuf {
        self.models().join(format!("{}.{}.model.json", target.as_str(), kind.as_str().to_ascii_lowercase()))
    }
}
