use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefaudit_core::datasets::{DegradationTag, ScoreCard};
use prefaudit_core::VulnFamily;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{PairDraft, Queue, Store};
use crate::task::{ReviewTask, TaskStatus};
use crate::AnnotateError;

pub const DEFAULT_PORT: u16 = 7341;

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code(), "message": self.to_string() });
        if let Some(v) = self.current_version() {
            body["current_version"] = json!(v);
        }
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, AnnotateError>;

fn actor(store: &Store, headers: &HeaderMap) -> ApiResult<String> {
    let value = headers
        .get(header::AUTHORIZATION)
        .ok_or_else(|| AnnotateError::Unauthenticated("missing bearer token".into()))?;
    let token = value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or_else(|| AnnotateError::Unauthenticated("malformed authorization header".into()))?;
    store
        .roster()
        .authenticate(token)
        .map(str::to_string)
        .ok_or_else(|| AnnotateError::Forbidden("unknown reviewer token".into()))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| AnnotateError::Validation(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| AnnotateError::Validation(e.body_text()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ListQuery {
    status: Option<TaskStatus>,
    #[serde(default)]
    queue: Queue,
}

#[derive(Serialize)]
struct TaskPage {
    tasks: Vec<ReviewTask>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresBody {
    version: u64,
    scores: ScoreCard,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairBody {
    version: u64,
    chosen: String,
    rejected: String,
    #[serde(default)]
    tag: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportQuery {
    family: Option<VulnFamily>,
}

async fn healthz(State(store): State<Arc<Store>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "tasks": store.tasks().len() }))
}

async fn tags() -> Json<serde_json::Value> {
    let tags: Vec<_> = DegradationTag::ALL
        .into_iter()
        .map(|t| json!({ "slug": t.slug(), "family": t.family(), "description": t.description() }))
        .collect();
    Json(json!({ "tags": tags }))
}

async fn list_tasks(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    q: Result<Query<ListQuery>, QueryRejection>,
) -> ApiResult<Json<TaskPage>> {
    let who = actor(&store, &headers)?;
    let q = query(q)?;
    Ok(Json(TaskPage { tasks: store.list_tasks(&who, q.status, q.queue)? }))
}

async fn get_task(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<ReviewTask>> {
    let who = actor(&store, &headers)?;
    Ok(Json(store.get_task(&who, &id)?))
}

async fn submit_scores(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    payload: Result<Json<ScoresBody>, JsonRejection>,
) -> ApiResult<Json<ReviewTask>> {
    let who = actor(&store, &headers)?;
    let b = body(payload)?;
    Ok(Json(store.submit_scores(&who, &id, b.version, b.scores)?))
}

async fn arbitrate(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    payload: Result<Json<ScoresBody>, JsonRejection>,
) -> ApiResult<Json<ReviewTask>> {
    let who = actor(&store, &headers)?;
    let b = body(payload)?;
    Ok(Json(store.arbitrate(&who, &id, b.version, b.scores)?))
}

async fn submit_pair(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    payload: Result<Json<PairBody>, JsonRejection>,
) -> ApiResult<Json<ReviewTask>> {
    let who = actor(&store, &headers)?;
    let b = body(payload)?;
    let draft = PairDraft { chosen: b.chosen, rejected: b.rejected, tag: b.tag };
    Ok(Json(store.submit_pair(&who, &id, b.version, draft)?))
}

async fn export_dpo(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    q: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    actor(&store, &headers)?;
    let q = query(q)?;
    let jsonl = store.export_dpo(q.family)?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/x-ndjson")], jsonl).into_response())
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/tags", get(tags))
        .route("/tasks", get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/scores", post(submit_scores))
        .route("/tasks/{id}/arbitration", post(arbitrate))
        .route("/tasks/{id}/pair", post(submit_pair))
        .route("/export/dpo", get(export_dpo))
        .with_state(store)
}

/// Serves until Ctrl-C.
pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
