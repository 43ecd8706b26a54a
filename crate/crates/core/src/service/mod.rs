//! HTTP front end for the agent.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | none | `{session_id}` |
//! | POST | `/v1/sessions/{id}/messages` | `{text}` | `{reply, turn_id}` |
//! | GET | `/v1/sessions/{id}/trace/{turn_id}` | none | turn trace |
//! | GET | `/healthz` | none | `{status, items}` |
//!
//! Errors are `{code, message}` with a matching status. A session accepts one
//! message at a time; a second concurrent message gets 409 `session_busy`.

mod config;

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use config::{build_provider, ConfigError, EmbeddingConfig, EvalSizes, ProviderConfig, ServiceConfig};

use crate::turn::{Agent, Session, TurnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { code: code.into(), message: message.into(), status: status.as_u16() }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: String,
    pub turn_id: usize,
}

type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

pub struct AppState {
    agent: Arc<Agent>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(agent: Agent) -> Self {
        AppState { agent: Arc::new(agent), sessions: Mutex::new(HashMap::new()), log_dir: None }
    }

    /// Appends each session's log lines to `<dir>/<session_id>.jsonl`.
    pub fn with_log_dir(mut self, dir: PathBuf) -> Self {
        self.log_dir = Some(dir);
        self
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let sessions = self.sessions.lock().expect("session map poisoned");
        sessions.get(id).cloned().ok_or_else(|| ApiError::not_found("session"))
    }

    fn append_log(&self, id: &str, session: &Session, from: usize) {
        let Some(dir) = &self.log_dir else { return };
        let path = dir.join(format!("{id}.jsonl"));
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
            for entry in &session.log[from..] {
                writeln!(f, "{}", serde_json::to_string(entry).map_err(std::io::Error::other)?)?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            tracing::warn!(path = %path.display(), error = %e, "cannot write session log");
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/trace/{turn_id}", get(get_trace))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "items": state.agent.catalog.len() }))
}

async fn create_session(State(state): State<Arc<AppState>>) -> (StatusCode, Json<CreatedSession>) {
    let id = uuid::Uuid::new_v4().to_string();
    let session = state.agent.new_session();
    state.sessions.lock().expect("session map poisoned").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    tracing::info!(session = %id, "session created");
    (StatusCode::CREATED, Json(CreatedSession { session_id: id }))
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<MessageReply>, ApiError> {
    let handle = state.session(&id)?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "text must not be empty"));
    }
    let mut guard = handle.try_lock_owned().map_err(|_| {
        ApiError::new(StatusCode::CONFLICT, "session_busy", "a message for this session is already being processed")
    })?;
    let st = state.clone();
    let sid = id.clone();
    let result = tokio::task::spawn_blocking(move || {
        let log_from = guard.log.len();
        let result = st.agent.run_turn(&mut guard, &req.text);
        if result.is_ok() {
            st.append_log(&sid, &guard, log_from);
        }
        result
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match result {
        Ok(turn) => Ok(Json(MessageReply { reply: turn.response, turn_id: turn.turn_id })),
        Err(TurnError::Provider(e)) => {
            tracing::warn!(session = %id, error = %e, "turn failed");
            Err(ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string()))
        }
    }
}

async fn get_trace(
    State(state): State<Arc<AppState>>,
    Path((id, turn_id)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    let handle = state.session(&id)?;
    let session = handle
        .try_lock()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "session_busy", "the session is processing a message"))?;
    let turn = session.turn(turn_id).ok_or_else(|| ApiError::not_found("turn"))?;
    Ok(Json(turn).into_response())
}

/// Builds the agent from `config` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let agent = config.build_agent()?;
    let mut state = AppState::new(agent);
    if let Some(dir) = &config.session_log_dir {
        std::fs::create_dir_all(dir).map_err(ServeError::Io)?;
        state = state.with_log_dir(dir.clone());
    }
    let listener = tokio::net::TcpListener::bind(&config.listen).await.map_err(ServeError::Io)?;
    tracing::info!(addr = %config.listen, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Io)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(std::io::Error),
}
