//! HTTP front end for interactive fine-tuning.
//!
//! Sessions live in memory. Each request on a session holds that session's
//! lock, so requests on one session are serialized while different sessions
//! proceed concurrently. With a log path, every accepted event is appended
//! as one JSON line and [`AppState::replay`] rebuilds the sessions on start.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::rollout_view::RolloutRecord;
use crate::session::{Choice, FinalReport, Outcome, PreferenceEngine, PreferenceSession, Query, SessionError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Created { session_id: String, seed: u64 },
    Preference { session_id: String, query_id: usize, choice: Choice },
}

pub struct AppState {
    engine: Option<Arc<PreferenceEngine>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<PreferenceSession>>>>,
    rollouts: RwLock<HashMap<String, Arc<RolloutRecord>>>,
    seeds: Mutex<ChaCha8Rng>,
    counter: Mutex<u64>,
    log: Option<Mutex<File>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = if e.is_conflict() { StatusCode::CONFLICT } else { StatusCode::INTERNAL_SERVER_ERROR };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize)]
struct SessionView<'a> {
    session_id: &'a str,
    iteration: usize,
    budget: usize,
    done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    query: Option<&'a Query>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    report: Option<FinalReport>,
}

impl<'a> SessionView<'a> {
    fn of(s: &'a PreferenceSession) -> Self {
        let done = s.is_done();
        Self {
            session_id: s.id(),
            iteration: s.iteration(),
            budget: s.budget(),
            done,
            query: s.query(),
            report: done.then(|| s.report()),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceBody {
    winner: Choice,
    query_id: Option<usize>,
}

impl AppState {
    /// `engine = None` models a server whose prediction context is not loaded.
    pub fn new(engine: Option<Arc<PreferenceEngine>>, seed: u64) -> Self {
        Self {
            engine,
            sessions: RwLock::default(),
            rollouts: RwLock::default(),
            seeds: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            counter: Mutex::new(0),
            log: None,
        }
    }

    /// Append accepted events to `path`.
    pub fn with_log(mut self, path: &Path) -> std::io::Result<Self> {
        self.log = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?));
        Ok(self)
    }

    fn engine(&self) -> ApiResult<&Arc<PreferenceEngine>> {
        self.engine
            .as_ref()
            .filter(|e| e.has_context())
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "prediction context not loaded"))
    }

    fn append(&self, event: &LogEvent) -> ApiResult<()> {
        if let Some(log) = &self.log {
            let mut f = log.lock().map_err(ApiError::internal)?;
            let line = serde_json::to_string(event).map_err(ApiError::internal)?;
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(ApiError::internal)?;
        }
        Ok(())
    }

    fn store_rollouts(&self, session: &PreferenceSession) {
        if let Some(q) = session.query() {
            let mut map = self.rollouts.write().expect("rollout map poisoned");
            for r in [&q.a.rollout, &q.b.rollout].into_iter().flatten() {
                map.insert(r.id.clone(), r.clone());
            }
        }
    }

    fn new_session_id(&self) -> String {
        let mut c = self.counter.lock().expect("counter poisoned");
        *c += 1;
        format!("s{:04}", *c)
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<PreferenceSession>>> {
        self.sessions.read().expect("session map poisoned").get(id).cloned()
    }

    pub fn rollout(&self, id: &str) -> Option<Arc<RolloutRecord>> {
        self.rollouts.read().expect("rollout map poisoned").get(id).cloned()
    }

    fn create_session(&self, seed: Option<u64>) -> ApiResult<serde_json::Value> {
        let engine = self.engine()?;
        let seed = seed.unwrap_or_else(|| self.seeds.lock().expect("rng poisoned").next_u64());
        let id = self.new_session_id();
        let session = engine.create(id.clone(), seed)?;
        self.append(&LogEvent::Created { session_id: id.clone(), seed })?;
        self.store_rollouts(&session);
        let body = serde_json::to_value(SessionView::of(&session)).map_err(ApiError::internal)?;
        self.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(session)));
        Ok(body)
    }

    fn submit(&self, id: &str, body: PreferenceBody) -> ApiResult<serde_json::Value> {
        let engine = self.engine()?;
        let handle = self.session(id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
        let mut session = handle.lock().map_err(ApiError::internal)?;
        let query_id = session.iteration();
        match engine.submit(&mut session, body.winner, body.query_id)? {
            Outcome::Next(_) | Outcome::Done(_) => {}
        }
        self.append(&LogEvent::Preference { session_id: id.to_string(), query_id, choice: body.winner })?;
        self.store_rollouts(&session);
        serde_json::to_value(SessionView::of(&session)).map_err(ApiError::internal)
    }

    /// Rebuild sessions from an event log written by [`AppState::with_log`].
    pub fn replay(&self, path: &Path) -> Result<usize, String> {
        let engine = self.engine().map_err(|e| e.message)?;
        let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut count = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let event: LogEvent = serde_json::from_str(&line).map_err(|e| format!("log line {}: {e}", n + 1))?;
            match event {
                LogEvent::Created { session_id, seed } => {
                    let session = engine.create(session_id.clone(), seed).map_err(|e| e.to_string())?;
                    self.store_rollouts(&session);
                    self.sessions.write().expect("session map poisoned").insert(session_id, Arc::new(Mutex::new(session)));
                    *self.counter.lock().expect("counter poisoned") += 1;
                    count += 1;
                }
                LogEvent::Preference { session_id, query_id, choice } => {
                    let handle = self.session(&session_id).ok_or_else(|| format!("log line {}: unknown session", n + 1))?;
                    let mut session = handle.lock().map_err(|e| e.to_string())?;
                    engine.submit(&mut session, choice, Some(query_id)).map_err(|e| format!("log line {}: {e}", n + 1))?;
                    self.store_rollouts(&session);
                }
            }
        }
        Ok(count)
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: CreateBody = if body.iter().all(u8::is_ascii_whitespace) { CreateBody::default() } else { parse_json(&body)? };
    let view = blocking(move || state.create_session(req.seed)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn submit_preference(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let req: PreferenceBody = parse_json(&body)?;
    Ok(Json(blocking(move || state.submit(&id, req)).await?))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let handle = state.session(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
    let session = handle.lock().map_err(ApiError::internal)?;
    Ok(Json(serde_json::to_value(SessionView::of(&session)).map_err(ApiError::internal)?))
}

async fn get_rollout(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Arc<RolloutRecord>>> {
    state.rollout(&id).map(Json).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown rollout {id}")))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "ready": state.engine().is_ok() }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/preference", post(submit_preference))
        .route("/rollouts/{id}", get(get_rollout))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
