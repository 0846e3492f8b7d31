//! Routes under `/v1`, plus the UI bundle at `/` when configured.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::parse_json;
use crate::service::{AllocateRequest, BacktestRequest, FitRequest, ScenarioRequest, Service, SCENARIO_CSV};
use crate::store::RunStatus;
use crate::ServiceError;

type Svc = State<Arc<Service>>;
type Result<T> = std::result::Result<T, ServiceError>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker: {e}")))?
}

fn query<T>(q: std::result::Result<Query<T>, QueryRejection>) -> Result<T> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::bad(e.body_text()))
}

fn content_type(name: &str) -> &'static str {
    if name.ends_with(".csv") {
        "text/csv"
    } else {
        "application/json"
    }
}

pub fn router(svc: Arc<Service>) -> Router {
    let static_dir = svc.config.static_dir.clone();
    let api = Router::new()
        .route("/v1/health", get(|| async { "ok" }))
        .route("/v1/datasets", post(ingest))
        .route("/v1/fit", post(fit))
        .route("/v1/backtest", post(backtest))
        .route("/v1/scenario", post(scenario))
        .route("/v1/allocate", post(allocate))
        .route("/v1/aggregates", get(aggregates))
        .route("/v1/calibration", get(calibration))
        .route("/v1/runs/{id}", get(run))
        .route("/v1/runs/{id}/artifacts/{name}", get(artifact))
        .with_state(svc);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// The request body is the series CSV itself.
async fn ingest(State(svc): Svc, body: Bytes) -> Result<Response> {
    let summary = blocking(move || svc.ingest(&body)).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn fit(State(svc): Svc, body: Bytes) -> Result<Response> {
    let req: FitRequest = parse_json(&body)?;
    let out = blocking(move || svc.fit(&req)).await?;
    let status = match out.run.status {
        RunStatus::Running => StatusCode::ACCEPTED,
        _ => StatusCode::OK,
    };
    Ok((status, Json(out)).into_response())
}

async fn backtest(State(svc): Svc, body: Bytes) -> Result<Response> {
    let req: BacktestRequest = parse_json(&body)?;
    let out = blocking(move || svc.backtest(&req)).await?;
    let status = match out.run.status {
        RunStatus::Running => StatusCode::ACCEPTED,
        _ => StatusCode::OK,
    };
    Ok((status, Json(out)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FormatQuery {
    format: Option<String>,
}

async fn scenario(
    State(svc): Svc,
    q: std::result::Result<Query<FormatQuery>, QueryRejection>,
    body: Bytes,
) -> Result<Response> {
    let csv = match query(q)?.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ServiceError::bad(format!("format must be json or csv, got {other:?}"))),
    };
    let req: ScenarioRequest = parse_json(&body)?;
    let svc2 = Arc::clone(&svc);
    let out = blocking(move || svc2.scenario(&req)).await?;
    if csv {
        let bytes = svc.artifact(&out.run_id, SCENARIO_CSV)?;
        return Ok(([(header::CONTENT_TYPE, "text/csv")], bytes).into_response());
    }
    Ok(Json(out).into_response())
}

async fn allocate(State(svc): Svc, body: Bytes) -> Result<Response> {
    let req: AllocateRequest = parse_json(&body)?;
    let out = blocking(move || svc.allocate(&req)).await?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AggregateQuery {
    attribute: Option<String>,
    filter: Option<String>,
}

async fn aggregates(
    State(svc): Svc,
    q: std::result::Result<Query<AggregateQuery>, QueryRejection>,
) -> Result<Response> {
    let q = query(q)?;
    let attribute = q.attribute.filter(|a| !a.is_empty());
    Ok(Json(svc.aggregate(attribute.as_deref(), q.filter.as_deref())?).into_response())
}

async fn calibration(State(svc): Svc) -> Response {
    Json(*svc.calibration()).into_response()
}

async fn run(State(svc): Svc, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(svc.run(&id)?).into_response())
}

async fn artifact(State(svc): Svc, Path((id, name)): Path<(String, String)>) -> Result<Response> {
    let bytes = svc.artifact(&id, &name)?;
    Ok(([(header::CONTENT_TYPE, content_type(&name))], bytes).into_response())
}
