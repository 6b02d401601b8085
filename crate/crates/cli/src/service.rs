//! HTTP suggestion service.
//!
//! `POST /api/complete` answers a [`CompletionRequest`] from the current
//! model snapshot; `GET /api/health` reports liveness. Snapshots are
//! immutable and replaced whole, so a request sees exactly one model.

use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gwlan_core::completer::{CompleteError, Completer, Suggestion};
use gwlan_core::corpus::Sentence;
use gwlan_core::wpm::ModelError;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

fn default_top_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRequest {
    pub source: String,
    #[serde(default)]
    pub left_context: String,
    #[serde(default)]
    pub right_context: String,
    pub typed: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub word: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub candidates: Vec<Candidate>,
    pub latency_ms: f64,
}

pub struct AppState {
    snapshot: RwLock<Arc<Completer>>,
}

impl AppState {
    pub fn new(completer: Completer) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(completer)),
        }
    }

    pub fn snapshot(&self) -> Arc<Completer> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Installs a new model; requests already running keep the old one.
    pub fn swap(&self, completer: Completer) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(completer);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/complete", post(complete))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

/// Validates and answers one request against a snapshot.
pub fn answer(completer: &Completer, req: &CompletionRequest) -> Result<Vec<Suggestion>, (StatusCode, String)> {
    let bad = |m: String| Err((StatusCode::BAD_REQUEST, m));
    if req.typed.is_empty() {
        return bad("typed must not be empty".into());
    }
    if req.typed.chars().any(char::is_whitespace) {
        return bad("typed must not contain whitespace".into());
    }
    if req.top_k == 0 {
        return bad("top_k must be at least 1".into());
    }
    let src = Sentence::parse(&req.source);
    if src.is_empty() {
        return bad("source must not be empty".into());
    }
    let left = Sentence::parse(&req.left_context);
    let right = Sentence::parse(&req.right_context);
    match completer.complete(&src, &left, &right, &req.typed, req.top_k) {
        Ok(s) => Ok(s),
        Err(CompleteError::EmptyCandidate(_)) => Ok(Vec::new()),
        Err(e @ CompleteError::Model(ModelError::SequenceTooLong { .. })) => bad(e.to_string()),
        Err(e) => Err((StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn complete(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let started = Instant::now();
    let req: CompletionRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let completer = state.snapshot();
    let result = tokio::task::spawn_blocking(move || answer(&completer, &req)).await;
    match result {
        Ok(Ok(suggestions)) => {
            let candidates = suggestions
                .into_iter()
                .map(|s| Candidate {
                    word: s.word,
                    score: s.score,
                })
                .collect();
            let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
            Json(CompletionResponse { candidates, latency_ms }).into_response()
        }
        Ok(Err((status, message))) => error(status, message),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
