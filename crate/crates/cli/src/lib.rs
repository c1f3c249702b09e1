//! Command-line driver: one subcommand per pipeline stage, artifacts under
//! a single output directory.

pub mod config;
pub mod error;
pub mod stages;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use engagecast_core::eval::Target;
use engagecast_core::predictors::PredictorKind;
use serde_json::{json, Value};

pub use config::{Layout, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "engagecast", version, about = "Weekly engagement forecasting pipeline")]
pub struct Cli {
    /// JSON run configuration; unset fields take defaults.
    #[arg(long, global = true, env = "ENGAGECAST_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed; every stage seed derives from it.
    #[arg(long, global = true, env = "ENGAGECAST_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "ENGAGECAST_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, global = true, env = "ENGAGECAST_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct PanelInputs {
    /// Weekly panel CSV.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Learner-state JSON; without it AFM features are imputed.
    #[arg(long)]
    pub learner_state: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: events.csv and truth.json.
    Synth {
        #[arg(long)]
        students: Option<usize>,
        #[arg(long)]
        weeks: Option<usize>,
    },
    /// Parse events and build the weekly panel with targets.
    Ingest {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Rolling-window AFM fits and per-week learner state.
    FitAfm {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Build the feature matrix and its schema.
    Features {
        #[command(flatten)]
        inputs: PanelInputs,
    },
    /// Train and score every predictor; writes the benchmark report.
    Benchmark {
        #[command(flatten)]
        inputs: PanelInputs,
        /// Comma-separated predictor names.
        #[arg(long, value_delimiter = ',')]
        predictors: Vec<PredictorKind>,
        /// Comma-separated targets (minutes, skills).
        #[arg(long, value_delimiter = ',', value_parser = parse_target)]
        targets: Vec<Target>,
        /// Bootstrap replicates.
        #[arg(long)]
        replicates: Option<usize>,
        /// Also sweep hyperparameter grids.
        #[arg(long)]
        grid: bool,
    },
    /// Feature-group ablation for one predictor.
    Ablate {
        #[command(flatten)]
        inputs: PanelInputs,
        #[arg(long)]
        predictor: Option<PredictorKind>,
        #[arg(long, value_delimiter = ',', value_parser = parse_target)]
        targets: Vec<Target>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Importance tables, bar charts and rank agreement from a report.
    Importance {
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Weekly truth and forecast trends from a report.
    Trends {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve forecasts and goal recommendations over HTTP.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Predictor whose saved models are served.
        #[arg(long, default_value = "GRADIENT_BOOST")]
        predictor: PredictorKind,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::parse(&s.to_ascii_lowercase()).ok_or_else(|| format!("unknown target `{s}`"))
}

impl Cli {
    /// Configuration file plus command-line overrides, resolved.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        match &self.command {
            Command::Synth { students, weeks } => {
                if let Some(n) = students {
                    cfg.synth.n_students = *n;
                }
                if let Some(n) = weeks {
                    cfg.synth.n_weeks = *n;
                }
            }
            Command::Ingest { events } | Command::FitAfm { events } => {
                if events.is_some() {
                    cfg.paths.events = events.clone();
                }
            }
            Command::Features { inputs } => apply_inputs(&mut cfg, inputs),
            Command::Benchmark { inputs, predictors, targets, replicates, grid } => {
                apply_inputs(&mut cfg, inputs);
                if !predictors.is_empty() {
                    cfg.benchmark.predictors = predictors.clone();
                }
                if !targets.is_empty() {
                    cfg.benchmark.targets = targets.clone();
                }
                if let Some(r) = replicates {
                    cfg.benchmark.bootstrap.replicates = *r;
                }
                cfg.benchmark.hyperparameter_grid |= *grid;
            }
            Command::Ablate { inputs, predictor, targets, replicates } => {
                apply_inputs(&mut cfg, inputs);
                if let Some(k) = predictor {
                    cfg.ablation.kind = *k;
                }
                if !targets.is_empty() {
                    cfg.ablation.targets = targets.clone();
                }
                if let Some(r) = replicates {
                    cfg.benchmark.bootstrap.replicates = *r;
                }
            }
            Command::Importance { report, top_k } => {
                if report.is_some() {
                    cfg.paths.report = report.clone();
                }
                if let Some(k) = top_k {
                    cfg.importance.top_k = *k;
                }
            }
            Command::Trends { report } => {
                if report.is_some() {
                    cfg.paths.report = report.clone();
                }
            }
            Command::Serve { bind, store, static_dir, scenarios, .. } => {
                if let Some(b) = bind {
                    cfg.service.bind = *b;
                }
                if store.is_some() {
                    cfg.service.store = store.clone().unwrap_or_default();
                }
                if static_dir.is_some() {
                    cfg.service.static_dir = static_dir.clone();
                }
                if scenarios.is_some() {
                    cfg.service.scenarios = scenarios.clone();
                }
            }
        }
        cfg.resolve()
    }

    fn learner_state_explicit(&self, cfg: &RunConfig) -> bool {
        cfg.paths.learner_state.is_some()
    }
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &PanelInputs) {
    if inputs.panel.is_some() {
        cfg.paths.panel = inputs.panel.clone();
    }
    if inputs.learner_state.is_some() {
        cfg.paths.learner_state = inputs.learner_state.clone();
    }
}

/// Service configuration pointing at the artifacts of an output directory.
pub fn service_config(cfg: &RunConfig, layout: &Layout, kind: PredictorKind) -> engagecast_service::ServiceConfig {
    let mut svc = cfg.service.clone();
    let model = |t: Target| {
        let p = layout.model(t, kind);
        p.exists().then_some(p)
    };
    svc.data.panel = layout.panel(cfg);
    svc.data.features = layout.file("features.csv");
    svc.data.schema = Some(layout.file("features.schema.json"));
    svc.data.model_minutes = model(Target::Minutes);
    svc.data.model_skills = model(Target::Skills);
    if svc.store.is_relative() {
        svc.store = layout.out.join(&svc.store);
    }
    svc
}

/// Runs one subcommand and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let cfg = cli.run_config()?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be positive"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let layout = Layout::new(&cli.out_dir);
    std::fs::create_dir_all(&layout.out).map_err(|e| CliError::output(&layout.out, e))?;
    let explicit = cli.learner_state_explicit(&cfg);
    match &cli.command {
        Command::Synth { .. } => stages::synth(&cfg, &layout),
        Command::Ingest { .. } => stages::ingest(&cfg, &layout),
        Command::FitAfm { .. } => stages::fit_afm(&cfg, &layout),
        Command::Features { .. } => stages::features(&cfg, &layout, explicit),
        Command::Benchmark { .. } => stages::benchmark(&cfg, &layout, explicit).map(|(v, _)| v),
        Command::Ablate { .. } => stages::ablate(&cfg, &layout, explicit),
        Command::Importance { .. } => stages::importance(&cfg, &layout),
        Command::Trends { .. } => stages::trends(&cfg, &layout),
        Command::Serve { predictor, .. } => {
            let svc = service_config(&cfg, &layout, *predictor);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
            stages::emit(&json!({ "command": "serve", "bind": svc.bind.to_string() }));
            rt.block_on(engagecast_service::serve(svc))?;
            Ok(json!({ "command": "serve", "stopped": true }))
        }
    }
}
