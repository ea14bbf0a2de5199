//! HTTP facade over the agent: persona listing, daily data windows, session
//! creation and newline-delimited JSON trace streaming.
//!
//! Sessions run on the blocking thread pool, one per request. Their events
//! are persisted as JSONL under the data directory, so finished sessions
//! survive a restart; sessions that were still running are lost.

pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use insight_core::agent::{
    backend_by_name, run_session_with, Agent, AgentConfig, AgentError, BackendError, ModelBackend, SessionKey,
    Toolbox,
};
use insight_core::datamodel::UserDataset;
use insight_core::retrieval::SearchTool;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use store::{Event, EventKind, Session, SessionRecord, Status};

/// Longest accepted question, in characters.
pub const MAX_QUESTION_CHARS: usize = 2000;
pub const NDJSON: &str = "application/x-ndjson";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt session data: {0}")]
    Corrupt(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl ServiceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Sessions are persisted under `<data_dir>/sessions`; `None` keeps
    /// them in memory only.
    pub data_dir: Option<PathBuf>,
    pub default_backend: String,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
    pub agent: AgentConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: None,
            default_backend: "demo".into(),
            cors_origin: None,
            agent: AgentConfig::default(),
        }
    }
}

pub struct AppState {
    users: BTreeMap<String, Arc<UserDataset>>,
    agent: Arc<Agent>,
    search: Option<Arc<dyn SearchTool>>,
    backends: RwLock<HashMap<String, Arc<dyn ModelBackend>>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    sessions_dir: Option<PathBuf>,
    config: ServiceConfig,
}

impl AppState {
    /// Build the state and reload finished sessions from the data directory.
    pub fn new(
        cohort: Vec<UserDataset>,
        search: Option<Arc<dyn SearchTool>>,
        config: ServiceConfig,
    ) -> Result<AppState, ServiceError> {
        let agent = Agent::new(config.agent.clone())?;
        let users = cohort.into_iter().map(|ds| (ds.user_id.clone(), Arc::new(ds))).collect();
        let sessions_dir = config.data_dir.as_ref().map(|d| d.join("sessions"));
        let mut sessions = HashMap::new();
        if let Some(dir) = &sessions_dir {
            std::fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
            for id in store::persisted_ids(dir)? {
                match Session::load(dir, &id)? {
                    Some(s) => {
                        sessions.insert(id, Arc::new(s));
                    }
                    None => tracing::info!(session = %id, "dropping session interrupted by restart"),
                }
            }
        }
        Ok(AppState {
            users,
            agent: Arc::new(agent),
            search,
            backends: RwLock::new(HashMap::new()),
            sessions: RwLock::new(sessions),
            sessions_dir,
            config,
        })
    }

    /// Make a backend addressable by `name` in session requests. Registered
    /// names take precedence over the built-in ones.
    pub fn register_backend(&self, name: impl Into<String>, backend: Arc<dyn ModelBackend>) {
        self.backends.write().unwrap_or_else(|p| p.into_inner()).insert(name.into(), backend);
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// Registered backends first, then the built-in names. File-backed
    /// scripted backends are only reachable once registered, so a request
    /// cannot make the server open arbitrary paths.
    fn resolve_backend(&self, name: &str) -> Result<Arc<dyn ModelBackend>, ApiError> {
        if let Some(b) = self.backends.read().unwrap_or_else(|p| p.into_inner()).get(name) {
            return Ok(b.clone());
        }
        if name.starts_with("scripted:") {
            return Err(ApiError::bad_request(format!("backend '{name}' is not registered")));
        }
        backend_by_name(name).map_err(|e| match e {
            BackendError::Unknown(_) => ApiError::bad_request(e.to_string()),
            other => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, other.to_string()),
        })
    }

    /// Create a session and start its agent loop on the blocking pool.
    pub fn start_session(
        self: &Arc<Self>,
        user_id: &str,
        question: &str,
        backend: Option<&str>,
    ) -> Result<String, ApiError> {
        let ds = self
            .users
            .get(user_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown user '{user_id}'")))?;
        let question = question.trim();
        if question.is_empty() {
            return Err(ApiError::bad_request("question must not be empty"));
        }
        let n = question.chars().count();
        if n > MAX_QUESTION_CHARS {
            return Err(ApiError::bad_request(format!(
                "question has {n} characters; the limit is {MAX_QUESTION_CHARS}"
            )));
        }
        let backend_name = backend.unwrap_or(&self.config.default_backend).to_string();
        let model = self.resolve_backend(&backend_name)?;

        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord {
            session_id: id.clone(),
            user_id: user_id.to_string(),
            question: question.to_string(),
            backend: backend_name,
            status: Status::Running,
            created_at: Utc::now(),
            finished_at: None,
        };
        let session = Arc::new(Session::create(record, self.sessions_dir.as_deref()).map_err(ApiError::internal)?);
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), session.clone());

        let state = self.clone();
        let question = question.to_string();
        let key = SessionKey::new(id.clone());
        tokio::task::spawn_blocking(move || {
            let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                let tools = Toolbox {
                    dataset: &ds,
                    search: state.search.as_deref(),
                };
                run_session_with(&state.agent, &question, &tools, model.as_ref(), &key, &mut |step| {
                    session.push_step(step);
                })
            }));
            match run {
                Ok(outcome) if outcome.final_answer.is_some() => {}
                Ok(_) => {
                    let reason = if session.events_from(0).0.last().is_some_and(|e| e.kind == EventKind::ProtocolError) {
                        "session ended on a protocol error".to_string()
                    } else {
                        format!("no answer within {} steps", state.agent.config.max_steps)
                    };
                    session.push(EventKind::Failed, None, reason, false);
                }
                Err(_) => {
                    session.push(EventKind::Failed, None, "agent loop panicked".into(), false);
                }
            }
        });
        Ok(id)
    }
}

/// An error response: a status code and a JSON body `{"error": message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub user_id: String,
    pub question: String,
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct UserSummary {
    pub user_id: String,
    pub age: u32,
    pub gender: String,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    /// Resume after this sequence number.
    after: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct Window {
    from: Option<String>,
    to: Option<String>,
}

/// The application's routes, with CORS applied.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match state.config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => cors.allow_origin(AllowOrigin::exact(origin)),
        _ => cors.allow_origin(Any),
    };
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/users", get(list_users))
        .route("/v1/users/{id}/daily", get(user_daily))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/events", get(session_events))
        .layer(cors)
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Bind `addr` and serve.
pub async fn bind_and_serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, state).await
}

async fn list_users(State(state): State<Arc<AppState>>) -> Json<Vec<UserSummary>> {
    Json(
        state
            .users
            .values()
            .map(|ds| UserSummary {
                user_id: ds.user_id.clone(),
                age: ds.context.age,
                gender: ds.context.gender.as_str().to_string(),
            })
            .collect(),
    )
}

fn parse_date(name: &str, raw: Option<&str>) -> Result<Option<NaiveDate>, ApiError> {
    raw.map(|s| {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| ApiError::bad_request(format!("'{name}' must be a YYYY-MM-DD date, got '{s}'")))
    })
    .transpose()
}

async fn user_daily(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(window): Query<Window>,
) -> Result<Response, ApiError> {
    let ds = state
        .users
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown user '{id}'")))?;
    let from = parse_date("from", window.from.as_deref())?;
    let to = parse_date("to", window.to.as_deref())?;
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return Err(ApiError::bad_request(format!("from ({f}) is after to ({t})")));
        }
    }
    let rows: Vec<_> = ds
        .daily
        .iter()
        .filter(|r| from.is_none_or(|f| r.date >= f) && to.is_none_or(|t| r.date <= t))
        .collect();
    Ok(Json(rows).into_response())
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let session_id = state.start_session(&req.user_id, &req.question, req.backend.as_deref())?;
    Ok((StatusCode::CREATED, Json(Created { session_id })))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let s = state
        .session(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
    let mut v = serde_json::to_value(s.record()).expect("record serializes");
    v["events"] = s.len().into();
    Ok(Json(v))
}

/// Replays stored events from the cursor, then follows live appends until
/// a terminal event has been sent.
fn event_stream(session: Arc<Session>, from: usize) -> impl futures::Stream<Item = Result<Bytes, Infallible>> {
    let rx = session.subscribe();
    futures::stream::unfold((session, rx, from, false), |(session, mut rx, cursor, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let (batch, closed) = session.events_from(cursor);
            if !batch.is_empty() {
                let finished = batch.last().is_some_and(Event::is_terminal);
                let next = cursor + batch.len();
                let chunk: String = batch.iter().map(Event::to_line).collect();
                return Some((Ok(Bytes::from(chunk)), (session, rx, next, finished)));
            }
            if closed || rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn session_events(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Response, ApiError> {
    let session = state
        .session(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
    let from = q.after.map_or(0, |a| a as usize + 1);
    let body = Body::from_stream(event_stream(session, from));
    Ok(([(header::CONTENT_TYPE, NDJSON), (header::CACHE_CONTROL, "no-cache")], body).into_response())
}
