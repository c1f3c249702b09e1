use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use engagecast_core::afm::{self, AfmExport, LearnerState, PracticeLog};
use engagecast_core::eval::{self, BenchmarkOutput, EvalReport, Target, TaskData};
use engagecast_core::explain::{self, AblationRow, AblationSetup, ImportanceTable, RankLevel};
use engagecast_core::ingest::{self, IngestReport, Panel};
use engagecast_core::pipeline::{self, LearnerStateRecord};
use engagecast_core::plot::{self, Series};
use engagecast_core::stats::BootstrapConfig;
use engagecast_core::{derive_seed, sha256_hex, synth, WeekId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Layout, RunConfig};
use crate::error::CliError;

/// Provenance block embedded in every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// Input file name → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Artifacts written before the report → sha256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub provenance: Provenance,
    pub report: T,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    layout: &'a Layout,
    command: &'static str,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
    written: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, layout: &'a Layout, command: &'static str) -> Self {
        Self { cfg, layout, command, inputs: BTreeMap::new(), artifacts: BTreeMap::new(), written: Vec::new() }
    }

    /// Artifact key: path relative to the output directory, else the file name.
    fn key(&self, path: &Path) -> String {
        match path.strip_prefix(&self.layout.out) {
            Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
            Err(_) => path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
        self.inputs.insert(self.key(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::output(path, e))?;
        self.artifacts.insert(self.key(path), sha256_hex(bytes));
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn write_with<F>(&mut self, path: &Path, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(path, &buf)
    }

    fn report<T: Serialize>(&mut self, path: &Path, report: T) -> Result<(), CliError> {
        let env = Envelope {
            provenance: Provenance {
                command: self.command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config: self.cfg.clone(),
                inputs: self.inputs.clone(),
                artifacts: self.artifacts.clone(),
            },
            report,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::new("json", e.to_string()))?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    fn summary(&self, extra: Value) -> Value {
        let files: Vec<String> = self.written.iter().map(|p| self.key(p)).collect();
        json!({ "command": self.command, "files": files, "summary": extra })
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::new("csv", e.to_string())
}

fn parse_events(run: &mut Run<'_>, path: &Path) -> Result<ingest::ParsedEvents, CliError> {
    let bytes = run.read(path)?;
    Ok(ingest::parse_events(&bytes[..], &run.cfg.ingest)?)
}

fn read_panel(run: &mut Run<'_>, path: &Path) -> Result<Panel, CliError> {
    let bytes = run.read(path)?;
    Panel::read_csv(&bytes[..]).map_err(|e| CliError::new("schema_mismatch", format!("{}: {e}", path.display())))
}

/// Learner state from `path`. A missing file at the default location means
/// no AFM features; a missing file the user named is an error.
fn read_learner_state(
    run: &mut Run<'_>,
    path: &Path,
    explicit: bool,
) -> Result<BTreeMap<(String, WeekId), LearnerState>, CliError> {
    if !explicit && !path.exists() {
        return Ok(BTreeMap::new());
    }
    let bytes = run.read(path)?;
    let records: Vec<LearnerStateRecord> =
        serde_json::from_slice(&bytes).map_err(|e| CliError::new("schema_mismatch", format!("{}: {e}", path.display())))?;
    Ok(pipeline::learner_state_map(records))
}

fn read_report(run: &mut Run<'_>, path: &Path) -> Result<EvalReport, CliError> {
    let bytes = run.read(path)?;
    let env: Envelope<EvalReport> =
        serde_json::from_slice(&bytes).map_err(|e| CliError::new("schema_mismatch", format!("{}: {e}", path.display())))?;
    Ok(env.report)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::new("json", e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn synth(cfg: &RunConfig, layout: &Layout) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "synth");
    let cohort = synth::generate(&cfg.synth)?;
    let events = layout.events(cfg);
    run.write_with(&events, |b| Ok(ingest::write_events(&cohort.events, b)?))?;
    run.write(&layout.file("truth.json"), &json_bytes(&cohort.truth)?)?;
    Ok(run.summary(json!({
        "events": cohort.events.len(),
        "students": cfg.synth.n_students,
        "weeks": cfg.synth.n_weeks,
    })))
}

pub fn ingest(cfg: &RunConfig, layout: &Layout) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "ingest");
    let parsed = parse_events(&mut run, &layout.events(cfg))?;
    let prepared = pipeline::prepare(&parsed.events, &cfg.prepare())?;
    run.write_with(&layout.panel(cfg), |b| Ok(prepared.panel.write_csv(b)?))?;
    run.write(&layout.file("mastery.json"), &json_bytes(&prepared.mastery)?)?;
    run.write(&layout.learner_state(cfg), &json_bytes(&pipeline::learner_state_records(&prepared.learner_state))?)?;
    let report = IngestReport::new(&parsed, &prepared.panel, prepared.mastery.len(), prepared.excluded);
    run.report(&layout.file("reports/ingest.json"), &report)?;
    Ok(run.summary(serde_json::to_value(&report).unwrap_or(Value::Null)))
}

pub fn fit_afm(cfg: &RunConfig, layout: &Layout) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "fit-afm");
    let parsed = parse_events(&mut run, &layout.events(cfg))?;
    let prep = cfg.prepare();
    let log = PracticeLog::build(&parsed.events, &prep.ingest);
    let fits = afm::rolling_refit(&log, &prep.afm, prep.seed)?;
    let state = afm::afm_features(&log, &fits, prep.afm.learning_rate_form);
    run.write(&layout.learner_state(cfg), &json_bytes(&pipeline::learner_state_records(&state))?)?;
    let n_windows = fits.len();
    run.report(&layout.file("afm_fits.json"), AfmExport { fits })?;
    Ok(run.summary(json!({ "windows": n_windows, "student_weeks": state.len() })))
}

fn write_matrix(run: &mut Run<'_>, design: &eval::Design) -> Result<(), CliError> {
    let layout = run.layout;
    run.write_with(&layout.file("features.csv"), |b| Ok(design.matrix.write_csv(b)?))?;
    run.write(&layout.file("features.schema.json"), &json_bytes(&design.matrix.schema)?)
}

pub fn features(cfg: &RunConfig, layout: &Layout, learner_state_explicit: bool) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "features");
    let panel = read_panel(&mut run, &layout.panel(cfg))?;
    let ls = read_learner_state(&mut run, &layout.learner_state(cfg), learner_state_explicit)?;
    let design = eval::design(&panel, &ls, &cfg.features, &cfg.benchmark)?;
    write_matrix(&mut run, &design)?;
    let meta = json!({
        "rows": design.matrix.rows.len(),
        "features": design.matrix.schema.len(),
        "schema_hash": design.matrix.schema.hash(),
        "start_quartiles": design.quartiles,
        "dev_students": design.dev.len(),
        "holdout_students": design.holdout.len(),
    });
    run.report(&layout.file("reports/features.json"), &meta)?;
    Ok(run.summary(meta))
}

pub fn benchmark(cfg: &RunConfig, layout: &Layout, learner_state_explicit: bool) -> Result<(Value, BenchmarkOutput), CliError> {
    let mut run = Run::new(cfg, layout, "benchmark");
    let panel = read_panel(&mut run, &layout.panel(cfg))?;
    let ls = read_learner_state(&mut run, &layout.learner_state(cfg), learner_state_explicit)?;
    let out = eval::run_benchmark(&panel, &ls, &cfg.features, &cfg.benchmark)?;
    run.write_with(&layout.file("features.csv"), |b| Ok(out.matrix.write_csv(b)?))?;
    run.write(&layout.file("features.schema.json"), &json_bytes(&out.matrix.schema)?)?;
    for (&(t, k), m) in &out.models {
        run.write(&layout.model(t, k), m.to_json().as_bytes())?;
    }
    run.write_with(&layout.file("reports/forecasts.csv"), |b| write_forecasts(&out, b))?;
    run.write_with(&layout.file("reports/table2.csv"), |b| out.report.write_table2_csv(b).map_err(csv_err))?;
    run.write_with(&layout.file("reports/table4.csv"), |b| out.report.write_table4_csv(b).map_err(csv_err))?;
    run.report(&layout.report(cfg), &out.report)?;
    let maes: Vec<Value> = out
        .report
        .results
        .iter()
        .map(|r| json!({ "target": r.target, "predictor": r.kind, "mae": r.mae }))
        .collect();
    Ok((run.summary(json!({ "results": maes, "best_heuristic": out.report.best_heuristic })), out))
}

fn write_forecasts(out: &BenchmarkOutput, buf: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["target", "predictor", "student_id", "week", "target_week", "target_index", "prediction", "truth"])
        .map_err(csv_err)?;
    for ((t, k), fc) in &out.forecasts {
        for f in fc {
            w.write_record([
                t.as_str().to_string(),
                k.as_str().to_string(),
                f.student_id.clone(),
                f.week.to_string(),
                f.target_week.to_string(),
                f.target_index.to_string(),
                f.prediction.to_string(),
                f.truth.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::new("io", e.to_string()))
}

pub fn ablate(cfg: &RunConfig, layout: &Layout, learner_state_explicit: bool) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "ablate");
    let panel = read_panel(&mut run, &layout.panel(cfg))?;
    let ls = read_learner_state(&mut run, &layout.learner_state(cfg), learner_state_explicit)?;
    let design = eval::design(&panel, &ls, &cfg.features, &cfg.benchmark)?;
    let mut all: BTreeMap<Target, Vec<AblationRow>> = BTreeMap::new();
    for &t in &cfg.ablation.targets {
        let data = TaskData::build(&panel, &design.matrix, t)?;
        let seed = derive_seed(cfg.ablation_seed(), t.as_str());
        let setup = AblationSetup {
            data: &data,
            schema: &design.matrix.schema,
            dev: &design.dev,
            holdout: &design.holdout,
            kind: cfg.ablation.kind,
            hyperparams: cfg.benchmark.hp(cfg.ablation.kind),
            bootstrap: BootstrapConfig { seed: derive_seed(seed, "bootstrap"), ..cfg.benchmark.bootstrap },
            seed,
        };
        let rows = explain::ablation_grid(&setup, &cfg.ablation.conditions)?;
        run.write_with(&layout.file(&format!("reports/ablation_{}.csv", t.as_str())), |b| {
            explain::write_ablation_csv(&rows, b).map_err(csv_err)
        })?;
        all.insert(t, rows);
    }
    run.report(&layout.file("reports/ablation.json"), &all)?;
    let brief: BTreeMap<&str, Vec<Value>> = all
        .iter()
        .map(|(t, rows)| {
            (t.as_str(), rows.iter().map(|r| json!({ "condition": r.condition, "mae": r.mae, "delta_pct": r.vs_full.delta_pct })).collect())
        })
        .collect();
    Ok(run.summary(json!(brief)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub target: Target,
    pub a: String,
    pub b: String,
    pub feature_tau: f64,
    pub group_tau: f64,
}

pub fn importance(cfg: &RunConfig, layout: &Layout) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "importance");
    let report = read_report(&mut run, &layout.report(cfg))?;
    let mut agreement = Vec::new();
    for (t, tables) in &report.importance {
        for table in tables {
            let stem = format!("reports/importance_{}_{}", t.as_str(), table.kind.as_str().to_ascii_lowercase());
            run.write_with(&layout.file(&format!("{stem}.csv")), |b| table.write_csv(b).map_err(csv_err))?;
            let top = table.top_k(cfg.importance.top_k);
            let title = format!("{} · {} · mean normalized importance", t.as_str(), table.kind.as_str());
            run.write(&layout.file(&format!("{stem}.svg")), plot::bar_chart_svg(&title, &top).as_bytes())?;
        }
        for (i, a) in tables.iter().enumerate() {
            for b in &tables[i + 1..] {
                agreement.push(agreement_row(*t, a, b)?);
            }
        }
    }
    run.report(&layout.file("reports/importance_agreement.json"), &agreement)?;
    Ok(run.summary(json!({ "pairs": agreement.len() })))
}

fn agreement_row(target: Target, a: &ImportanceTable, b: &ImportanceTable) -> Result<Agreement, CliError> {
    Ok(Agreement {
        target,
        a: a.kind.as_str().to_string(),
        b: b.kind.as_str().to_string(),
        feature_tau: explain::rank_agreement(a, b, RankLevel::Feature)?,
        group_tau: explain::rank_agreement(a, b, RankLevel::Group)?,
    })
}

pub fn trends(cfg: &RunConfig, layout: &Layout) -> Result<Value, CliError> {
    let mut run = Run::new(cfg, layout, "trends");
    let report = read_report(&mut run, &layout.report(cfg))?;
    for (t, weeks) in &report.trends {
        let stem = format!("reports/trends_{}", t.as_str());
        run.write_with(&layout.file(&format!("{stem}.csv")), |b| eval::write_trend_csv(weeks, b).map_err(csv_err))?;
        let labels: Vec<String> = weeks.iter().map(|w| w.week.to_string()).collect();
        let lo: Vec<f64> = weeks.iter().map(|w| (w.truth_mean - w.truth_std).max(0.0)).collect();
        let hi: Vec<f64> = weeks.iter().map(|w| w.truth_mean + w.truth_std).collect();
        let truth: Vec<f64> = weeks.iter().map(|w| w.truth_mean).collect();
        let names: Vec<&String> = weeks.first().map(|w| w.pred_mean.keys().collect()).unwrap_or_default();
        let preds: Vec<(String, Vec<f64>)> = names
            .iter()
            .map(|n| ((*n).clone(), weeks.iter().map(|w| w.pred_mean.get(*n).copied().unwrap_or(f64::NAN)).collect()))
            .collect();
        let mut series = vec![Series { name: "truth", values: &truth }];
        series.extend(preds.iter().map(|(n, v)| Series { name: n, values: v }));
        let title = format!("{} per week: truth mean ± sd and mean forecasts", t.as_str());
        run.write(&layout.file(&format!("{stem}.svg")), plot::line_chart_svg(&title, &labels, Some((&lo, &hi)), &series).as_bytes())?;
    }
    run.report(&layout.file("reports/trends.json"), &report.trends)?;
    Ok(run.summary(json!({ "targets": report.trends.keys().collect::<Vec<_>>() })))
}

/// Writes one JSON value per line to stdout.
pub fn emit(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
}
