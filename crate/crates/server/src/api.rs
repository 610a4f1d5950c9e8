//! HTTP routes.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cha_core::engine::{EngineError, TurnRequest};
use cha_core::task::TaskSpec;
use cha_core::trace::TurnStatus;
use cha_core::translation::{LanguageTag, SUPPORTED_LANGUAGES};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use uuid::Uuid;

use crate::service::{Service, ServiceError};

pub const AUTH_HEADER: &str = "x-auth-token";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {message}")]
    BindFailure { addr: String, message: String },
    #[error("server error: {0}")]
    Io(String),
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::EngineBusy(_) => Self::new(StatusCode::CONFLICT, "EngineBusy", message),
            ServiceError::UnknownSession(_) => Self::not_found(message),
            ServiceError::Engine(EngineError::EmptyQuery) => {
                Self::new(StatusCode::BAD_REQUEST, "EmptyQuery", message)
            }
            ServiceError::Engine(EngineError::UnknownMetadata(_)) => {
                Self::new(StatusCode::BAD_REQUEST, "UnknownMetadata", message)
            }
            ServiceError::Engine(EngineError::InvalidSettings(_)) | ServiceError::Storage(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", message)
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
    auth_token: Option<Arc<str>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: Uuid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RespondRequest {
    /// Omitted or unknown ids start a new session under that id.
    #[serde(default)]
    pub session_id: Option<Uuid>,
    pub query: String,
    #[serde(default)]
    pub metadata: Vec<String>,
    #[serde(default)]
    pub language: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RespondBody {
    pub session_id: Uuid,
    pub answer: String,
    pub turn_id: u64,
    pub tasks_used: Vec<String>,
    pub language: String,
    pub status: TurnStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub turn_id: u64,
    pub query: String,
    pub answer: String,
    pub language: String,
    pub tasks_used: Vec<String>,
    pub status: TurnStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryBody {
    pub session_id: Uuid,
    pub turns: Vec<HistoryTurn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UploadBody {
    pub reference: String,
}

pub fn router(service: Arc<Service>, auth_token: Option<String>) -> Router {
    let state = AppState {
        service,
        auth_token: auth_token.map(Arc::from),
    };
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/respond", post(respond))
        .route("/api/sessions/{id}/history", get(history))
        .route("/api/sessions/{id}/trace/{turn_id}", get(trace))
        .route("/api/metadata", post(upload))
        .route("/api/tasks", get(tasks))
        .route("/api/languages", get(languages))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .merge(api)
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.auth_token {
        let given = request
            .headers()
            .get(AUTH_HEADER)
            .and_then(|v| v.to_str().ok());
        if given != Some(expected.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong auth token")
                .into_response();
        }
    }
    next.run(request).await
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string())
    })?
}

async fn create_session(State(state): State<AppState>) -> Result<Json<SessionCreated>, ApiError> {
    let service = state.service.clone();
    let session_id = blocking(move || Ok(service.store.create()?)).await?;
    Ok(Json(SessionCreated { session_id }))
}

async fn respond(
    State(state): State<AppState>,
    Json(req): Json<RespondRequest>,
) -> Result<Json<RespondBody>, ApiError> {
    if req.query.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyQuery", "the query is empty"));
    }
    let language = req
        .language
        .as_deref()
        .map(LanguageTag::parse)
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "UnsupportedLanguage", e.to_string()))?;
    let session_id = req.session_id.unwrap_or_else(Uuid::new_v4);
    let request = TurnRequest {
        query: req.query,
        metadata: req.metadata,
        language,
    };
    let service = state.service.clone();
    let result = blocking(move || Ok(service.respond(session_id, &request)?)).await?;
    Ok(Json(RespondBody {
        session_id,
        answer: result.answer,
        turn_id: result.turn_id,
        tasks_used: result.tasks_used,
        language: result.language.code().to_string(),
        status: result.trace.status,
    }))
}

fn parse_session(id: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(id).map_err(|_| ApiError::not_found(format!("unknown session {id}")))
}

async fn history(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<HistoryBody>, ApiError> {
    let session_id = parse_session(&id)?;
    let service = state.service.clone();
    let session = blocking(move || {
        service
            .store
            .snapshot(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id).into())
    })
    .await?;
    Ok(Json(HistoryBody {
        session_id,
        turns: session
            .history
            .iter()
            .map(|t| HistoryTurn {
                turn_id: t.turn_id,
                query: t.query.clone(),
                answer: t.answer.clone(),
                language: t.language.code().to_string(),
                tasks_used: t.tasks_used.clone(),
                status: t.trace.status,
            })
            .collect(),
    }))
}

async fn trace(
    State(state): State<AppState>,
    Path((id, turn_id)): Path<(String, u64)>,
) -> Result<Response, ApiError> {
    let session_id = parse_session(&id)?;
    let service = state.service.clone();
    let session = blocking(move || {
        service
            .store
            .snapshot(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id).into())
    })
    .await?;
    let turn = session
        .turn(turn_id)
        .ok_or_else(|| ApiError::not_found(format!("session {session_id} has no turn {turn_id}")))?;
    Ok(Json(&turn.trace).into_response())
}

async fn upload(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<UploadBody>, ApiError> {
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyUpload", "the upload is empty"));
    }
    let media_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/octet-stream")
        .to_string();
    let caption = params.get("caption").cloned().unwrap_or_default();
    let service = state.service.clone();
    let reference =
        blocking(move || Ok(service.upload(body.to_vec(), &media_type, &caption)?)).await?;
    Ok(Json(UploadBody { reference }))
}

async fn tasks(State(state): State<AppState>) -> Json<Vec<TaskSpec>> {
    Json(state.service.engine.registry.specs().cloned().collect())
}

async fn languages(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "supported": SUPPORTED_LANGUAGES,
        "lang_mode": state.service.engine.settings.lang_mode,
    }))
}

pub async fn bind(addr: &str) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr)
        .await
        .map_err(|e| ServeError::BindFailure {
            addr: addr.to_string(),
            message: e.to_string(),
        })
}

/// Serves until `shutdown` resolves, letting in-flight requests finish.
pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ServeError::Io(e.to_string()))
}

/// Address a listener ended up on, useful after binding port 0.
pub fn local_addr(listener: &TcpListener) -> Result<SocketAddr, ServeError> {
    listener.local_addr().map_err(|e| ServeError::Io(e.to_string()))
}
