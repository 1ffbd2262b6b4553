use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use scenl::event::is_identifier;
use scenl::interp::LoadError;
use scenl::lang::{check, MacroError};
use scenl::{format, parse, Diagnostic, Event, Machine, Output, Registry, TraceRecord};

use crate::session::{Mode, SessionError, Snapshot, StopReport};
use crate::store::{ScenarioRecord, ScenarioSummary, StoreError};
use crate::{AppState, RegistrySources};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("scenario failed validation")]
    ValidationFailed(Vec<Diagnostic>),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<&'a [Diagnostic]>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::ValidationFailed(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"),
            ApiError::Session(SessionError::NoRunningMachine) => (StatusCode::CONFLICT, "no_running_machine"),
            ApiError::Session(SessionError::AlreadyRunning(_)) => (StatusCode::CONFLICT, "already_running"),
            ApiError::Session(SessionError::InvalidEvent(_)) => (StatusCode::BAD_REQUEST, "invalid_event"),
            ApiError::Session(SessionError::Halted(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "run_halted"),
            ApiError::Session(SessionError::Closed) | ApiError::Internal(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let diagnostics = match &self {
            ApiError::ValidationFailed(d) => Some(d.as_slice()),
            _ => None,
        };
        let body = ErrorBody {
            error: code,
            message: self.to_string(),
            diagnostics,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios).post(create_scenario))
        .route(
            "/scenarios/{id}",
            get(read_scenario).put(update_scenario).delete(delete_scenario),
        )
        .route("/registry", get(read_registry).put(write_registry))
        .route("/check", post(check_source))
        .route("/run/start", post(start))
        .route("/run/stop", post(stop))
        .route("/run/inject", post(inject))
        .route("/run/tick", post(tick))
        .route("/run/snapshot", get(snapshot))
        .route("/run/entities", get(entities))
        .route("/run/stream", get(stream))
        .with_state(state)
}

// ---- scenarios ----------------------------------------------------------------

#[derive(Deserialize)]
struct CreateScenario {
    #[serde(default = "untitled")]
    name: String,
    source: String,
    #[serde(rename = "macro", default)]
    is_macro: bool,
}

fn untitled() -> String {
    "untitled".to_string()
}

#[derive(Deserialize)]
struct UpdateScenario {
    name: Option<String>,
    source: String,
    #[serde(rename = "macro")]
    is_macro: Option<bool>,
}

/// 422 when the stored record carries error diagnostics.
fn saved(record: ScenarioRecord, ok: StatusCode) -> Response {
    let status = if record.has_errors() {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        ok
    };
    (status, Json(record)).into_response()
}

async fn list_scenarios(State(state): State<Arc<AppState>>) -> Json<Vec<ScenarioSummary>> {
    Json(state.store().list())
}

async fn create_scenario(State(state): State<Arc<AppState>>, Json(req): Json<CreateScenario>) -> ApiResult<Response> {
    check_macro_name(req.is_macro, &req.name)?;
    let diagnostics = state.diagnose(&req.source, req.is_macro.then_some(req.name.as_str()));
    let record = state.store().create(req.name, req.source, req.is_macro, diagnostics)?;
    Ok(saved(record, StatusCode::CREATED))
}

async fn read_scenario(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ScenarioRecord>> {
    Ok(Json(state.store().get(&id)?.clone()))
}

async fn update_scenario(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<UpdateScenario>,
) -> ApiResult<Response> {
    let current = state.store().get(&id)?.clone();
    let name = req.name.clone().unwrap_or(current.name);
    let is_macro = req.is_macro.unwrap_or(current.is_macro);
    check_macro_name(is_macro, &name)?;
    let diagnostics = state.diagnose(&req.source, is_macro.then_some(name.as_str()));
    let record = state
        .store()
        .update(&id, req.name, req.source, req.is_macro, diagnostics)?;
    Ok(saved(record, StatusCode::OK))
}

async fn delete_scenario(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ScenarioRecord>> {
    Ok(Json(state.store().delete(&id)?))
}

fn check_macro_name(is_macro: bool, name: &str) -> ApiResult<()> {
    if is_macro && !is_identifier(name) {
        return Err(ApiError::BadRequest(format!(
            "macro name `{name}` must be an identifier"
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct CheckRequest {
    source: String,
}

#[derive(Serialize)]
struct CheckResponse {
    diagnostics: Vec<Diagnostic>,
    /// Canonical text, when the source parses.
    formatted: Option<String>,
}

async fn check_source(State(state): State<Arc<AppState>>, Json(req): Json<CheckRequest>) -> Json<CheckResponse> {
    Json(CheckResponse {
        diagnostics: state.diagnose(&req.source, None),
        formatted: parse(&req.source).ok().map(|p| format(&p)),
    })
}

// ---- registry -----------------------------------------------------------------

#[derive(Serialize)]
struct RegistryView {
    #[serde(flatten)]
    sources: RegistrySources,
    registry: Registry,
}

async fn read_registry(State(state): State<Arc<AppState>>) -> Json<RegistryView> {
    let reg = state.registry.read().expect("registry lock");
    Json(RegistryView {
        sources: reg.sources.clone(),
        registry: reg.registry.clone(),
    })
}

async fn write_registry(
    State(state): State<Arc<AppState>>,
    Json(sources): Json<RegistrySources>,
) -> ApiResult<Json<RegistryView>> {
    let registry = sources.build().map_err(ApiError::BadRequest)?;
    state.replace_registry(sources.clone(), registry.clone())?;
    Ok(Json(RegistryView { sources, registry }))
}

// ---- run control --------------------------------------------------------------

#[derive(Deserialize)]
struct StartRequest {
    id: String,
    #[serde(default)]
    mode: Mode,
}

#[derive(Serialize)]
struct StartResponse {
    scenario: String,
    mode: Mode,
    records: Vec<TraceRecord>,
}

#[derive(Serialize)]
struct Records {
    records: Vec<TraceRecord>,
}

async fn start(State(state): State<Arc<AppState>>, Json(req): Json<StartRequest>) -> ApiResult<Json<StartResponse>> {
    let (program, registry) = {
        let store = state.store();
        let record = store.get(&req.id)?;
        if record.is_macro {
            return Err(ApiError::BadRequest("macros cannot be started on their own".into()));
        }
        let program = parse(&record.source).map_err(|e| ApiError::ValidationFailed(vec![e.to_diagnostic()]))?;
        (program, state.registry_with_macros(&store, None))
    };
    let machine = Machine::load(&program, Arc::new(registry), state.machine_config()).map_err(|e| match e {
        LoadError::Invalid(d) => ApiError::ValidationFailed(d),
        LoadError::Macro(m) => {
            let code = match m {
                MacroError::MacroCycle(_) => "macro-cycle",
                MacroError::UnknownMacro(_) => "unknown-macro",
            };
            ApiError::ValidationFailed(vec![Diagnostic::error(code, m.to_string(), Default::default())])
        }
    })?;
    let records = state.session.start(req.id.clone(), machine, req.mode).await?;
    Ok(Json(StartResponse {
        scenario: req.id,
        mode: req.mode,
        records,
    }))
}

async fn stop(State(state): State<Arc<AppState>>) -> ApiResult<Json<StopReport>> {
    Ok(Json(state.session.stop().await?))
}

async fn inject(State(state): State<Arc<AppState>>, Json(mut event): Json<Event>) -> ApiResult<Json<Records>> {
    event.seq = 0;
    Ok(Json(Records {
        records: state.session.inject(event).await?,
    }))
}

#[derive(Deserialize)]
struct TickRequest {
    #[serde(default = "one")]
    n: u64,
}

fn one() -> u64 {
    1
}

/// The body is optional; an empty one means a single tick.
async fn tick(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Records>> {
    let n = if body.iter().all(u8::is_ascii_whitespace) {
        1
    } else {
        serde_json::from_slice::<TickRequest>(&body)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?
            .n
    };
    Ok(Json(Records {
        records: state.session.tick(n).await?,
    }))
}

#[derive(Deserialize)]
struct SnapshotQuery {
    #[serde(default = "default_last")]
    last: usize,
}

fn default_last() -> usize {
    100
}

async fn snapshot(State(state): State<Arc<AppState>>, Query(q): Query<SnapshotQuery>) -> ApiResult<Json<Snapshot>> {
    state
        .session
        .snapshot(q.last)
        .await?
        .map(Json)
        .ok_or(ApiError::Session(SessionError::NoRunningMachine))
}

async fn entities(State(state): State<Arc<AppState>>) -> ApiResult<Json<BTreeMap<String, Vec<Output>>>> {
    Ok(Json(state.session.entities().await?))
}

/// Newline-delimited JSON, one trace record per line. A subscriber that falls
/// too far behind is disconnected rather than silently skipping records; it
/// can resynchronise from the snapshot.
async fn stream(State(state): State<Arc<AppState>>) -> Response {
    let rx = state.session.subscribe();
    let closing = state.closing.subscribe();
    let lines = futures::stream::unfold((rx, closing), |(mut rx, mut closing)| async move {
        let received = tokio::select! {
            r = rx.recv() => r,
            _ = closing.wait_for(|c| *c) => return None,
        };
        match received {
            Ok(record) => {
                let mut line = serde_json::to_vec(&record).expect("records serialize");
                line.push(b'\n');
                Some((Ok::<_, Infallible>(Bytes::from(line)), (rx, closing)))
            }
            Err(broadcast::error::RecvError::Lagged(n)) => {
                tracing::warn!(skipped = n, "stream subscriber lagged; closing");
                None
            }
            Err(broadcast::error::RecvError::Closed) => None,
        }
    });
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(lines),
    )
        .into_response()
}

impl AppState {
    /// Diagnostics for `source` against the registry and the stored macros.
    /// A macro is checked with its new body standing in for the stored one,
    /// so self-reference shows up as a cycle.
    pub(crate) fn diagnose(&self, source: &str, macro_name: Option<&str>) -> Vec<Diagnostic> {
        let store = self.store();
        let mut reg = self.registry_with_macros(&store, macro_name);
        if let (Some(name), Ok(p)) = (macro_name, parse(source)) {
            reg.add_macro(name, p);
        }
        check(source, &reg)
    }
}
