use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use engagecast_core::eval::Target;
use engagecast_core::WeekId;
use serde::Deserialize;
use serde_json::json;

use crate::data::{DataError, DataPaths, Lookup, ServiceData};
use crate::policy::{recommend, RecommendationPolicy};
use crate::scenarios::{self, Scenario};
use crate::store::GoalStore;
use crate::types::{GoalCycle, GoalRequest, GoalSource, Period, RecommendationRequest};
use crate::schema;

pub struct AppState {
    data: RwLock<Arc<ServiceData>>,
    pub store: GoalStore,
    pub scenarios: Vec<Scenario>,
    pub policy: Box<dyn RecommendationPolicy>,
    pub blocked_phrases: Vec<String>,
    pub session_seed: u64,
    /// Source of `/admin/reload`; `None` disables it.
    pub paths: Option<DataPaths>,
}

impl AppState {
    pub fn new(
        data: ServiceData,
        store: GoalStore,
        scenarios: Vec<Scenario>,
        policy: Box<dyn RecommendationPolicy>,
        blocked_phrases: Vec<String>,
        session_seed: u64,
    ) -> Self {
        Self { data: RwLock::new(Arc::new(data)), store, scenarios, policy, blocked_phrases, session_seed, paths: None }
    }

    /// Current artifacts; callers keep a consistent view for one request.
    pub fn data(&self) -> Arc<ServiceData> {
        self.data.read().expect("data handle").clone()
    }

    /// Replaces the artifacts atomically; in-flight requests keep the old ones.
    pub fn swap(&self, data: ServiceData) {
        *self.data.write().expect("data handle") = Arc::new(data);
    }

    pub fn reload(&self) -> Result<(), DataError> {
        if let Some(p) = &self.paths {
            self.swap(ServiceData::load(p)?);
        }
        Ok(())
    }

    fn scenario_for(&self, student: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.student_id == student)
    }

    fn known(&self, data: &ServiceData, student: &str) -> bool {
        data.has_student(student) || self.scenario_for(student).is_some()
    }

    /// Seeded or fixture cycles followed by stored ones, with `achieved`
    /// filled from the panel where it covers the period.
    pub fn cycles(&self, data: &ServiceData, student: &str) -> Vec<GoalCycle> {
        let mut out = match self.scenario_for(student) {
            Some(s) => s.cycles.clone(),
            None => data.seeded_cycles.get(student).cloned().unwrap_or_default(),
        };
        out.extend(self.store.cycles(student));
        for c in &mut out {
            if c.achieved.is_none() {
                c.achieved = data.achieved(student, c.goal_type, &c.period);
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn unknown_student(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_student", format!("no student {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

fn lookup_error(student: &str, e: Lookup) -> ApiError {
    match e {
        Lookup::UnknownStudent => ApiError::unknown_student(student),
        Lookup::UnknownWeek => ApiError::new(StatusCode::NOT_FOUND, "unknown_week", format!("no such week for {student}")),
        Lookup::NoModel(t) => ApiError::new(StatusCode::CONFLICT, "no_model", format!("no trained {} model loaded", t.as_str())),
        Lookup::Failed(m) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "forecast_failed", m),
    }
}

fn bad_body(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.body_text())
}

#[derive(Debug, Deserialize)]
pub struct ForecastQuery {
    pub target: Option<String>,
    pub week: Option<String>,
}

async fn forecast(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    q: Result<Query<ForecastQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text()))?;
    let target = match q.target.as_deref() {
        None => Target::Minutes,
        Some(t) => Target::parse(t)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", format!("unknown target `{t}`")))?,
    };
    let week = q
        .week
        .as_deref()
        .map(str::parse::<WeekId>)
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.to_string()))?;
    let data = st.data();
    let f = data.forecast(&id, target, week).map_err(|e| lookup_error(&id, e))?;
    Ok(Json(f).into_response())
}

async fn cycles(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let data = st.data();
    if !st.known(&data, &id) {
        return Err(ApiError::unknown_student(&id));
    }
    Ok(Json(st.cycles(&data, &id)).into_response())
}

async fn recommendation(
    State(st): State<Arc<AppState>>,
    body: Result<Json<RecommendationRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let data = st.data();
    if !st.known(&data, &req.student_id) {
        return Err(ApiError::unknown_student(&req.student_id));
    }
    let cycles = st.cycles(&data, &req.student_id);
    let last = cycles
        .iter()
        .rev()
        .find(|c| c.goal_type == req.goal_type && c.is_complete())
        .ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_completed_cycle", "no completed goal cycle of this type")
        })?;
    let (signals, cohort) = match st.scenario_for(&req.student_id) {
        Some(s) => (s.signals, s.cohort),
        None => (data.signals(&req.student_id, req.goal_type).map_err(|e| lookup_error(&req.student_id, e))?, data.cohort),
    };
    let r = recommend(st.policy.as_ref(), req.goal_type, last, &signals, &cohort, req.variant, &st.blocked_phrases);
    Ok(Json(r).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ScenarioQuery {
    pub session: Option<u64>,
}

async fn list_scenarios(
    State(st): State<Arc<AppState>>,
    q: Result<Query<ScenarioQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text()))?;
    Ok(Json(scenarios::ordered(&st.scenarios, q.session.unwrap_or(st.session_seed))).into_response())
}

async fn post_goal(
    State(st): State<Arc<AppState>>,
    body: Result<Json<GoalRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    if !(req.value.is_finite() && req.value > 0.0) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_value", "goal value must be positive"));
    }
    if req.source == GoalSource::Seeded {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_source", "source must be accepted, adjusted or manual"));
    }
    let data = st.data();
    if !st.known(&data, &req.student_id) {
        return Err(ApiError::unknown_student(&req.student_id));
    }
    let lock = st.store.student_lock(&req.student_id);
    let _guard = lock.lock().await;
    let existing: Vec<GoalCycle> = st.cycles(&data, &req.student_id).into_iter().filter(|c| c.goal_type == req.goal_type).collect();
    let week = match existing.iter().map(|c| c.period.last).max() {
        Some(w) => w.succ(),
        None => data.last_week(&req.student_id).map(WeekId::succ).ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_history", "student has no weeks to schedule after")
        })?,
    };
    let mut cycle = GoalCycle {
        student_id: req.student_id.clone(),
        cycle: existing.iter().map(|c| c.cycle).max().unwrap_or(0) + 1,
        goal_type: req.goal_type,
        target: req.value,
        achieved: None,
        period: Period { first: week, last: week },
        source: req.source,
    };
    st.store
        .append(cycle.clone())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_failed", e.to_string()))?;
    cycle.achieved = data.achieved(&cycle.student_id, cycle.goal_type, &cycle.period);
    Ok((StatusCode::CREATED, Json(cycle)).into_response())
}

async fn get_schema() -> Response {
    Json(schema::document()).into_response()
}

async fn health(State(st): State<Arc<AppState>>) -> Response {
    let data = st.data();
    let models: serde_json::Map<String, serde_json::Value> =
        data.models.iter().map(|(t, m)| (t.as_str().to_string(), json!(m.kind.as_str()))).collect();
    Json(json!({ "status": "ok", "students": data.panel.students().len(), "models": models })).into_response()
}

async fn reload(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    if st.paths.is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "reload_unavailable", "service was started without artifact paths"));
    }
    st.reload().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "reload_failed", e.to_string()))?;
    Ok(health(State(st)).await)
}

pub fn router(state: Arc<AppState>, static_dir: Option<&std::path::Path>) -> Router {
    let mut r = Router::new()
        .route("/students/{id}/forecast", get(forecast))
        .route("/students/{id}/cycles", get(cycles))
        .route("/recommendation", post(recommendation))
        .route("/scenarios", get(list_scenarios))
        .route("/goals", post(post_goal))
        .route("/schema", get(get_schema))
        .route("/health", get(health))
        .route("/admin/reload", post(reload));
    if let Some(dir) = static_dir {
        r = r.nest_service("/static", tower_http::services::ServeDir::new(dir));
    }
    r.with_state(state)
}
