use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use engagecast_core::eval::{self, BenchmarkConfig, BenchmarkOutput, Target};
use engagecast_core::features::FeatureConfig;
use engagecast_core::pipeline::{self, PrepareConfig, Prepared};
use engagecast_core::predictors::PredictorKind;
use engagecast_core::stats::BootstrapConfig;
use engagecast_core::synth::{self, RegimeConfig};
use engagecast_service::data::DataPaths;
use engagecast_service::{build_state, AppState, ServiceConfig};

pub struct Fixture {
    pub prepared: Prepared,
    pub out: BenchmarkOutput,
}

pub fn fixture(n_students: usize, predictors: &[PredictorKind]) -> Fixture {
    let cohort = synth::generate(&RegimeConfig { n_students, n_weeks: 20, n_skills: 60, seed: 5, ..Default::default() }).unwrap();
    let prepared = pipeline::prepare(&cohort.events, &PrepareConfig::default()).unwrap();
    let cfg = BenchmarkConfig {
        predictors: predictors.to_vec(),
        bootstrap: BootstrapConfig { replicates: 200, ..Default::default() },
        seed: 9,
        ..Default::default()
    };
    let out = eval::run_benchmark(&prepared.panel, &prepared.learner_state, &FeatureConfig::default(), &cfg).unwrap();
    Fixture { prepared, out }
}

/// Writes the artifacts to `dir` the way the CLI lays them out and builds a
/// service state from the files.
pub fn state_from_files(fx: &Fixture, kind: PredictorKind, dir: &Path) -> Arc<AppState> {
    let panel = dir.join("panel.csv");
    fx.prepared.panel.write_csv(std::fs::File::create(&panel).unwrap()).unwrap();
    let features = dir.join("features.csv");
    fx.out.matrix.write_csv(std::fs::File::create(&features).unwrap()).unwrap();
    let schema = dir.join("features.schema.json");
    std::fs::write(&schema, serde_json::to_string(&fx.out.matrix.schema).unwrap()).unwrap();
    let mut paths = DataPaths { panel, features, schema: Some(schema), ..Default::default() };
    let models: BTreeMap<Target, _> =
        Target::ALL.iter().filter_map(|&t| fx.out.models.get(&(t, kind)).map(|m| (t, m))).collect();
    for (t, m) in models {
        let p = dir.join(format!("{}.model.json", t.as_str()));
        std::fs::write(&p, m.to_json()).unwrap();
        match t {
            Target::Minutes => paths.model_minutes = Some(p),
            Target::Skills => paths.model_skills = Some(p),
        }
    }
    build_state(&ServiceConfig { data: paths, store: dir.join("goals.jsonl"), ..Default::default() }).unwrap()
}
