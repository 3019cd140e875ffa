//! HTTP/JSON service: cohort upload, asynchronous fit jobs, exam-time
//! decisions and what-if updates for single patients.
//!
//! Fitted stores are immutable once published. At most one fit per cohort
//! runs at a time.

mod error;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use psma_io::report::{patient_report, to_json, whatif_report};
use psma_io::{CohortFile, DecisionRequest, WhatIfRequest};

pub use error::ApiError;
pub use state::{AppState, FitJob, FitRequest, JobState, Progress};

/// Builds the router over shared state.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/cohorts", post(post_cohort))
        .route("/cohorts/{id}", get(get_cohort))
        .route("/cohorts/{id}/patients/{pid}", get(get_patient))
        .route("/fits", post(post_fit))
        .route("/fits/{id}", get(get_fit))
        .route("/fits/{id}/cancel", post(cancel_fit))
        .route("/patients/{pid}/optimal-time", post(optimal_time))
        .route("/patients/{pid}/whatif", post(whatif))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(bind: SocketAddr, data_dir: Option<PathBuf>) -> std::io::Result<()> {
    let state = AppState::open(data_dir).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(%bind, "listening");
    axum::serve(listener, router(state)).await
}

/// Body already rendered by the shared report code.
fn json_text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[derive(Debug, Deserialize)]
struct CohortQuery {
    id: Option<String>,
}

async fn post_cohort(
    State(state): State<AppState>,
    Query(q): Query<CohortQuery>,
    body: String,
) -> Result<Response, ApiError> {
    let cohort = CohortFile::from_json_str(&body)?;
    let (id, created) = state.add_cohort(q.id, cohort)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let summary = state.cohort_summary(&id)?;
    Ok((status, Json(summary)).into_response())
}

async fn get_cohort(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.cohort_summary(&id)?).into_response())
}

async fn get_patient(
    State(state): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let cohort = state.cohort(&id)?;
    let entry = cohort.patient(&pid).ok_or_else(|| ApiError::not_found(format!("unknown patient {pid}")))?;
    Ok(Json(entry.clone()).into_response())
}

async fn post_fit(State(state): State<AppState>, Json(req): Json<FitRequest>) -> Result<Response, ApiError> {
    let job = state.start_fit(req)?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_fit(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.job(&id)?).into_response())
}

async fn cancel_fit(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.cancel(&id)?).into_response())
}

#[derive(Debug, Deserialize)]
struct OptimalTimeBody {
    #[serde(default)]
    cohort: Option<String>,
    #[serde(flatten)]
    decision: DecisionRequest,
}

async fn optimal_time(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Json(body): Json<OptimalTimeBody>,
) -> Result<Response, ApiError> {
    let cfg = body.decision.config()?;
    let (cohort, fit) = state.fit_for_patient(body.cohort.as_deref(), &pid)?;
    let report = tokio::task::spawn_blocking(move || patient_report(&fit.store, &cohort, &pid, &cfg))
        .await
        .map_err(ApiError::internal)??;
    Ok(json_text(StatusCode::OK, to_json(&report)))
}

#[derive(Debug, Deserialize)]
struct WhatIfBody {
    #[serde(default)]
    cohort: Option<String>,
    #[serde(flatten)]
    request: WhatIfRequest,
}

async fn whatif(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Json(body): Json<WhatIfBody>,
) -> Result<Response, ApiError> {
    body.request.decision.config()?;
    let (cohort, fit) = state.fit_for_patient(body.cohort.as_deref(), &pid)?;
    let req = body.request;
    let report = tokio::task::spawn_blocking(move || whatif_report(&fit.store, &cohort, &pid, &req))
        .await
        .map_err(ApiError::internal)??;
    Ok(json_text(StatusCode::OK, to_json(&report)))
}
