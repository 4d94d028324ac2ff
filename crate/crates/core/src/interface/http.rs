//! JSON session API.
//!
//! | method | path | result |
//! |---|---|---|
//! | POST | `/sessions` | [`SessionSummary`] of the new session |
//! | GET | `/sessions/{id}` | [`Snapshot`](super::Snapshot) |
//! | POST | `/sessions/{id}/iterate` | [`IterateView`](super::IterateView) |
//! | POST | `/sessions/{id}/annotations` | [`SessionSummary`] |
//! | POST | `/sessions/{id}/evaluate` | [`EvaluationReport`](crate::evaluation::EvaluationReport) |
//! | POST | `/sessions/{id}/stop` | [`SessionSummary`] |
//! | GET | `/sessions/{id}/prompt` | [`PromptView`](super::PromptView) |
//! | GET | `/sessions/{id}/history` | [`HistoryView`](super::HistoryView) |
//!
//! Failures carry an [`ApiError`] body with status 400, 404, 409, 500 or 502.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ApiError, CreateSessionRequest, SessionStore, SubmissionBody};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type Store = Arc<SessionStore>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::validation("request body must be a JSON document"));
    }
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let message = if path == "." {
            format!("invalid request body: {}", e.inner())
        } else {
            format!("invalid request body at `{path}`: {}", e.inner())
        };
        ApiError::validation(message)
    })
}

/// Runs a store operation on the blocking pool; backend calls may block for a while.
async fn blocking<T, F>(store: Store, op: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, ApiError> + Send + 'static,
{
    respond(blocking_status(store, op, StatusCode::OK).await)
}

async fn blocking_status<T, F>(
    store: Store,
    op: F,
    ok: StatusCode,
) -> Result<(StatusCode, Json<T>), ApiError>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || op(&store)).await {
        Ok(result) => result.map(|value| (ok, Json(value))),
        Err(join) => Err(ApiError::new(
            super::ErrorCode::Config,
            format!("request handler failed: {join}"),
        )),
    }
}

fn respond<T: Serialize>(result: Result<(StatusCode, Json<T>), ApiError>) -> Response {
    match result {
        Ok(ok) => ok.into_response(),
        Err(err) => {
            log::warn!("{:?}: {}", err.code, err.message);
            err.into_response()
        }
    }
}

async fn create_session(State(store): State<Store>, body: Bytes) -> Response {
    let request: CreateSessionRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    respond(blocking_status(store, move |s| s.create(request), StatusCode::CREATED).await)
}

async fn get_session(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.snapshot(&id)).await
}

async fn iterate(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.iterate(&id)).await
}

async fn annotations(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> Response {
    let body: SubmissionBody = match parse_body(&body) {
        Ok(b) => b,
        Err(e) => return e.into_response(),
    };
    blocking(store, move |s| s.annotate(&id, body.into_submissions())).await
}

async fn evaluate(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.evaluate(&id)).await
}

async fn stop(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.stop(&id)).await
}

async fn prompt(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.prompt(&id)).await
}

async fn history(State(store): State<Store>, Path(id): Path<String>) -> Response {
    blocking(store, move |s| s.history(&id)).await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/iterate", post(iterate))
        .route("/sessions/{id}/annotations", post(annotations))
        .route("/sessions/{id}/evaluate", post(evaluate))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/prompt", get(prompt))
        .route("/sessions/{id}/history", get(history))
        .fallback(not_found)
        .with_state(store)
}

/// Serves the API until the process is interrupted.
pub async fn serve(addr: SocketAddr, store: Arc<SessionStore>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving sessions from {} on http://{}",
        store.dir().display(),
        listener.local_addr()?
    );
    axum::serve(listener, router(store)).await
}
