//! HTTP service over trained engagement models: next-week forecasts, goal
//! recommendations in three presentation variants, tutor scenarios and a
//! durable goal-cycle journal.

pub mod api;
pub mod data;
pub mod policy;
pub mod scenarios;
pub mod schema;
pub mod store;
pub mod types;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use api::{router, AppState};
pub use data::{DataPaths, ServiceData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data: DataPaths,
    pub store: PathBuf,
    pub scenarios: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub blocked_phrases: Vec<String>,
    pub policy: policy::StepRule,
    pub session_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data: DataPaths::default(),
            store: PathBuf::from("goals.jsonl"),
            scenarios: None,
            static_dir: None,
            blocked_phrases: policy::default_blocked_phrases(),
            policy: policy::StepRule::default(),
            session_seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Scenario(#[from] scenarios::ScenarioError),
    #[error("serve: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads every artifact named by the config.
pub fn build_state(cfg: &ServiceConfig) -> Result<Arc<AppState>, ServiceError> {
    let data = ServiceData::load(&cfg.data)?;
    let store = store::GoalStore::open(&cfg.store)?;
    let scenarios = match &cfg.scenarios {
        Some(p) => scenarios::load(p)?,
        None => scenarios::builtin(),
    };
    let mut state = AppState::new(
        data,
        store,
        scenarios,
        Box::new(cfg.policy),
        cfg.blocked_phrases.clone(),
        cfg.session_seed,
    );
    state.paths = Some(cfg.data.clone());
    Ok(Arc::new(state))
}

pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = build_state(&cfg)?;
    let app = router(state, cfg.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    axum::serve(listener, app).await?;
    Ok(())
}
