//! HTTP binding of [`ReviewService`]. Bodies are JSON; errors are
//! `{"error": code, "detail": message}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ReviewError;
use crate::project::CreateRequest;
use crate::service::ReviewService;

type AppState = Arc<ReviewService>;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = serde_json::json!({"error": self.code(), "detail": self.to_string()});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ReviewError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ReviewError::Internal(format!("worker failed: {e}")))?
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let raw: &[u8] = if bytes.is_empty() { b"{}" } else { bytes };
    serde_json::from_slice(raw).map_err(|e| ReviewError::Invalid(format!("bad request body: {e}")))
}

fn json<T: Serialize>(value: T) -> Response {
    Json(value).into_response()
}

#[derive(Deserialize)]
struct ReferenceBody {
    track_ids: Vec<String>,
}

#[derive(Deserialize)]
struct ThresholdBody {
    threshold: f64,
}

#[derive(Deserialize)]
struct PickBody {
    cluster_ids: Vec<i64>,
}

#[derive(Deserialize, Default)]
struct ApproveBody {
    #[serde(default)]
    confirm: bool,
}

#[derive(Deserialize)]
struct SceneQuery {
    scene: Option<usize>,
}

#[derive(Deserialize)]
struct ThumbQuery {
    track: Option<String>,
}

pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/projects", post(create).get(list))
        .route("/projects/{id}", get(show))
        .route("/projects/{id}/log", get(decision_log))
        .route("/projects/{id}/track", post(track))
        .route("/projects/{id}/tracklets", get(tracklets))
        .route("/projects/{id}/reference", post(reference))
        .route("/projects/{id}/threshold", post(threshold))
        .route("/projects/{id}/scores", get(scores))
        .route("/projects/{id}/clusters", get(clusters))
        .route("/projects/{id}/clusters/pick", post(pick))
        .route("/projects/{id}/segments/{sid}/audio", get(snippet))
        .route("/projects/{id}/frames/{n}/thumb", get(thumb))
        .route("/projects/{id}/approve", post(approve))
        .route("/projects/{id}/plan", get(plan))
        .route("/projects/{id}/execute", post(execute))
        .route("/projects/{id}/report", get(report))
        .route("/projects/{id}/export/{format}", get(export))
        .fallback(|| async { ReviewError::NotFound("no such endpoint".into()) })
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(service: Arc<ReviewService>, addr: SocketAddr) -> std::io::Result<()> {
    if !addr.ip().is_loopback() {
        log::warn!("serving review API on non-loopback address {addr}");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review API listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}

async fn create(State(s): State<AppState>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = body(&bytes)?;
    let project = blocking(move || s.create_project(req)).await?;
    Ok((StatusCode::CREATED, Json(project)).into_response())
}

async fn list(State(s): State<AppState>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.list_projects()).await?))
}

async fn show(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.project(&id)).await?))
}

async fn decision_log(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.decision_log(&id)).await?))
}

async fn track(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.run_tracking(&id)).await?))
}

async fn tracklets(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<SceneQuery>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.list_tracklets(&id, q.scene)).await?))
}

async fn reference(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let b: ReferenceBody = body(&bytes)?;
    Ok(json(blocking(move || s.set_reference(&id, b.track_ids)).await?))
}

async fn threshold(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let b: ThresholdBody = body(&bytes)?;
    Ok(json(blocking(move || s.set_threshold(&id, b.threshold)).await?))
}

async fn scores(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.scores(&id)).await?))
}

async fn clusters(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.clusters(&id)).await?))
}

async fn pick(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let b: PickBody = body(&bytes)?;
    Ok(json(blocking(move || s.pick_clusters(&id, b.cluster_ids)).await?))
}

async fn snippet(State(s): State<AppState>, Path((id, sid)): Path<(String, String)>) -> ApiResult<Response> {
    let wav = blocking(move || s.snippet(&id, &sid)).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response())
}

async fn thumb(
    State(s): State<AppState>,
    Path((id, n)): Path<(String, String)>,
    Query(q): Query<ThumbQuery>,
) -> ApiResult<Response> {
    let frame: u64 = n
        .parse()
        .map_err(|_| ReviewError::Invalid(format!("frame index {n:?} is not a number")))?;
    let png = blocking(move || s.thumbnail(&id, frame, q.track.as_deref())).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn approve(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let b: ApproveBody = body(&bytes)?;
    Ok(json(blocking(move || s.approve(&id, b.confirm)).await?))
}

async fn plan(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(move || s.plan(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn execute(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.execute(&id)).await?))
}

async fn report(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(blocking(move || s.report(&id)).await?))
}

async fn export(State(s): State<AppState>, Path((id, format)): Path<(String, String)>) -> ApiResult<Response> {
    match format.as_str() {
        "via" => {
            let text = blocking(move || s.export_via(&id)).await?;
            Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
        }
        "eaf" => {
            let text = blocking(move || s.export_eaf(&id)).await?;
            Ok(([(header::CONTENT_TYPE, "application/xml")], text).into_response())
        }
        other => Err(ReviewError::NotFound(format!("unknown export format {other:?}"))),
    }
}
