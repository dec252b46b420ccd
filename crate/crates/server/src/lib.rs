//! HTTP front end for reward scoring.
//!
//! Forward responses are scored inline. Backward responses execute code, so
//! they pass through an admission semaphore first: once `max_pending`
//! backward requests are in flight, further ones get `429` instead of
//! queueing without bound.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use codeforge_core::pipeline::ErrorBody;
use codeforge_core::reward::{score_task, RewardConfig, ScoreError, ScoreRequest, ScoreResponse};
use codeforge_core::sandbox::Executor;
use codeforge_core::taskgen::{Direction, TaskInstance};
use serde::Serialize;
use tokio::sync::Semaphore;

pub const SCHEMA_HEADER: &str = "x-codeforge-schema";
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub reward: RewardConfig,
    /// Backward scoring requests allowed in flight at once.
    pub max_pending: usize,
}

impl ServerConfig {
    /// Room for a few waiting requests per sandbox slot.
    pub fn for_slots(slots: usize, reward: RewardConfig) -> Self {
        ServerConfig {
            reward,
            max_pending: slots.max(1) * 4,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    tasks: Arc<HashMap<String, TaskInstance>>,
    executor: Arc<dyn Executor>,
    reward: RewardConfig,
    admission: Arc<Semaphore>,
}

impl AppState {
    pub fn new(
        tasks: HashMap<String, TaskInstance>,
        executor: Arc<dyn Executor>,
        config: ServerConfig,
    ) -> Self {
        AppState {
            tasks: Arc::new(tasks),
            executor,
            reward: config.reward,
            admission: Arc::new(Semaphore::new(config.max_pending.max(1))),
        }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("unknown task `{id}`"),
        )
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        let status = match e {
            ScoreError::Sandbox(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, "scoring_failed", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    tasks: usize,
    schema: &'static str,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tasks/{id}", get(get_task))
        .route("/score", post(score))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint") })
        .layer(axum::middleware::map_response(stamp_schema))
        .with_state(state)
}

async fn stamp_schema(mut res: Response) -> Response {
    res.headers_mut().insert(
        HeaderName::from_static(SCHEMA_HEADER),
        HeaderValue::from_static(SCHEMA_VERSION),
    );
    res
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        tasks: state.tasks.len(),
        schema: SCHEMA_VERSION,
    })
}

async fn get_task(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.tasks.get(&id) {
        Some(task) => Json(task.view()).into_response(),
        None => ApiError::not_found(&id).into_response(),
    }
}

async fn score(
    State(state): State<AppState>,
    body: Result<Json<ScoreRequest>, JsonRejection>,
) -> Result<Json<ScoreResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let Some(task) = state.tasks.get(&req.task_id) else {
        return Err(ApiError::not_found(&req.task_id));
    };
    let breakdown = match task.direction {
        Direction::Forward => score_task(
            &req.response_text,
            task,
            &state.reward,
            state.executor.as_ref(),
        )?,
        Direction::Backward => {
            let permit = state.admission.clone().try_acquire_owned().map_err(|_| {
                ApiError::new(
                    StatusCode::TOO_MANY_REQUESTS,
                    "overloaded",
                    "sandbox capacity exhausted, retry later",
                )
            })?;
            let st = state.clone();
            let (id, text) = (req.task_id.clone(), req.response_text.clone());
            tokio::task::spawn_blocking(move || {
                let _permit = permit;
                let task = &st.tasks[&id];
                score_task(&text, task, &st.reward, st.executor.as_ref())
            })
            .await
            .map_err(|e| {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            })??
        }
    };
    Ok(Json(ScoreResponse {
        task_id: req.task_id,
        group_id: req.group_id,
        breakdown,
    }))
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    log::info!(
        "listening on {} with {} tasks",
        listener.local_addr()?,
        state.task_count()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
