//! JSON HTTP API over an [`Engine`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hmdap_core::export::to_csv_string;
use hmdap_core::orchestrator::ParseOptions;
use hmdap_core::{CancelToken, Engine, EngineError, ErrorClass};
use serde::Deserialize;
use serde_json::json;

use crate::jobs::{JobManager, JobSnapshot, JobStatus};
use crate::render::relation_page_json;

pub const DEFAULT_PAGE_SIZE: usize = 1000;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub jobs: Arc<JobManager>,
    pub page_size: usize,
    /// Directory that relative `local:` urls in submitted configs resolve
    /// against.
    pub base_dir: PathBuf,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        let jobs = Arc::new(JobManager::new(engine.workers()));
        let base_dir = engine.data_dir().to_path_buf();
        AppState {
            engine,
            jobs,
            page_size: DEFAULT_PAGE_SIZE,
            base_dir,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} not found"),
        )
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e.class() {
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Invalid => StatusCode::BAD_REQUEST,
            ErrorClass::Cancelled => StatusCode::CONFLICT,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "code": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/tables", get(list_tables))
        .route("/query", post(query))
        .route("/graph/shortest-paths", post(shortest_paths))
        .route("/graph/components", post(components))
        .route("/pipelines", post(submit_pipeline))
        .route("/pipelines/{id}", get(get_pipeline))
        .route("/pipelines/{id}/cancel", post(cancel_pipeline))
        .route("/pipelines/{id}/result.csv", get(pipeline_csv))
        .fallback(|| async { ApiError::not_found("route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed",
            )
        })
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, EngineError> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => {
            log::error!("request worker panicked: {e}");
            Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal_error",
                "worker panicked",
            ))
        }
    }
}

async fn list_tables(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "tables": st.engine.list_tables() }))
}

#[derive(Deserialize)]
struct QueryBody {
    sql: String,
}

async fn query(
    State(st): State<AppState>,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(body) = body?;
    let engine = Arc::clone(&st.engine);
    let rel = blocking(move || engine.query(&body.sql, &CancelToken::new())).await?;
    Ok(Json(relation_page_json(&rel, 0, usize::MAX)))
}

#[derive(Deserialize)]
struct PathsBody {
    table: String,
    src_col: String,
    dst_col: String,
    #[serde(default)]
    weight_col: Option<String>,
    source: serde_json::Value,
}

async fn shortest_paths(
    State(st): State<AppState>,
    body: Result<Json<PathsBody>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(b) = body?;
    let source = match &b.source {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                format!("`source` must be a string or a number, got {other}"),
            ))
        }
    };
    let engine = Arc::clone(&st.engine);
    let rel = blocking(move || {
        engine.shortest_paths(
            &b.table,
            &b.src_col,
            &b.dst_col,
            b.weight_col.as_deref(),
            &source,
        )
    })
    .await?;
    Ok(Json(relation_page_json(&rel, 0, usize::MAX)))
}

#[derive(Deserialize)]
struct ComponentsBody {
    table: String,
    src_col: String,
    dst_col: String,
}

async fn components(
    State(st): State<AppState>,
    body: Result<Json<ComponentsBody>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(b) = body?;
    let engine = Arc::clone(&st.engine);
    let rel =
        blocking(move || engine.connected_components(&b.table, &b.src_col, &b.dst_col)).await?;
    Ok(Json(relation_page_json(&rel, 0, usize::MAX)))
}

#[derive(Deserialize)]
struct SubmitBody {
    ml_config: String,
    db_config: String,
    #[serde(default)]
    lenient: bool,
}

async fn submit_pipeline(
    State(st): State<AppState>,
    body: Result<Json<SubmitBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let Json(b) = body?;
    let opts = ParseOptions { strict: !b.lenient };
    let (cfg, db) = st.engine.parse_configs(&b.ml_config, &b.db_config, opts)?;
    let engine = Arc::clone(&st.engine);
    let base = st.base_dir.clone();
    let id = st.jobs.submit(Box::new(move |cancel| {
        engine.run_pipeline(&cfg, &db, &base, cancel)
    }));
    log::info!("pipeline {id} queued");
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "id": id, "status": JobStatus::Queued })),
    ))
}

#[derive(Deserialize)]
struct PageParams {
    #[serde(default)]
    page: usize,
}

fn snapshot_json(s: &JobSnapshot, page: usize, page_size: usize) -> serde_json::Value {
    let result = s.result.as_ref().map(|r| {
        let mut j = relation_page_json(&r.result, page.saturating_mul(page_size), page_size);
        let m = j.as_object_mut().expect("object");
        m.insert("page".into(), page.into());
        m.insert("page_size".into(), page_size.into());
        m.insert("branches_run".into(), json!(r.branches_run));
        m.insert("timings".into(), json!(r.timings));
        m.insert(
            "model".into(),
            r.model_summary.clone().unwrap_or(serde_json::Value::Null),
        );
        j
    });
    json!({
        "id": s.id,
        "status": s.status,
        "submitted_at": s.submitted_at,
        "started_at": s.started_at,
        "finished_at": s.finished_at,
        "error": s.error,
        "result": result,
    })
}

async fn get_pipeline(
    State(st): State<AppState>,
    Path(id): Path<String>,
    params: Result<Query<PageParams>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Query(p) = params?;
    let snap = st
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found("pipeline"))?;
    Ok(Json(snapshot_json(&snap, p.page, st.page_size)))
}

async fn cancel_pipeline(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let snap = st
        .jobs
        .cancel(&id)
        .ok_or_else(|| ApiError::not_found("pipeline"))?;
    Ok(Json(snapshot_json(&snap, 0, st.page_size)))
}

async fn pipeline_csv(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = st
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found("pipeline"))?;
    match (&snap.status, &snap.result) {
        (JobStatus::Succeeded, Some(r)) => Ok((
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            to_csv_string(&r.result),
        )
            .into_response()),
        (status, _) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "not_ready",
            format!("pipeline is {status:?}; a CSV exists only once it has succeeded"),
        )),
    }
}
