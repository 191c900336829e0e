//! HTTP front end over an [`Engine`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::engine::{AskOutcome, Engine, EngineError, EngineStats, QueryRequest, RecallOutcome, WriteOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::EmptyContent => (400, "EmptyContent"),
            EngineError::InvalidRequest(_) => (400, "InvalidRequest"),
            EngineError::CapExceeded { .. } => (400, "CapExceeded"),
            EngineError::UnknownNamespace(_) => (403, "UnknownNamespace"),
            EngineError::Store(_) => (500, "StoreError"),
        };
        ApiError { status, code: code.into(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriteBody {
    pub namespace: String,
    pub content: String,
    pub label_value: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub namespace: String,
    pub query: String,
    pub n: Option<usize>,
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    workers: Arc<Semaphore>,
}

impl AppState {
    /// Runs `f` on the blocking pool, at most `workers` at a time.
    async fn run<T, F>(&self, f: F) -> Result<Json<T>, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
    {
        let _permit = self.workers.acquire().await.map_err(|_| internal("worker pool closed"))?;
        let engine = self.engine.clone();
        let out = tokio::task::spawn_blocking(move || f(&engine)).await.map_err(|e| internal(&e.to_string()))?;
        Ok(Json(out?))
    }
}

fn internal(msg: &str) -> ApiError {
    ApiError { status: 500, code: "Internal".into(), message: msg.into() }
}

fn query(engine: &Engine, b: QueryBody) -> QueryRequest {
    QueryRequest { request_index: engine.next_request_index(), namespace: b.namespace, text: b.query, n: b.n }
}

async fn write(State(s): State<AppState>, Json(b): Json<WriteBody>) -> Result<Json<WriteOutcome>, ApiError> {
    s.run(move |e| e.write(e.next_request_index(), &b.namespace, &b.content, b.label_value.unwrap_or(0.0))).await
}

async fn recall(State(s): State<AppState>, Json(b): Json<QueryBody>) -> Result<Json<RecallOutcome>, ApiError> {
    s.run(move |e| e.recall(&query(e, b))).await
}

async fn ask(State(s): State<AppState>, Json(b): Json<QueryBody>) -> Result<Json<AskOutcome>, ApiError> {
    s.run(move |e| e.ask(&query(e, b))).await
}

async fn stats(State(s): State<AppState>) -> Json<EngineStats> {
    Json(s.engine.stats())
}

pub fn router(engine: Arc<Engine>, workers: usize) -> Router {
    let state = AppState { engine, workers: Arc::new(Semaphore::new(workers.max(1))) };
    Router::new()
        .route("/v1/write", post(write))
        .route("/v1/recall", post(recall))
        .route("/v1/ask", post(ask))
        .route("/v1/stats", get(stats))
        .with_state(state)
}

/// Serves until ctrl-c, then drains in-flight requests.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, workers: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(engine, workers))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
