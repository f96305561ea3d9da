//! HTTP routes over [`Service`]. Every body carries `"version"`.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mof_forge::intent::Attachment;
use mof_forge::service::{ErrorBody, Service, ServiceError, API_VERSION};
use serde::{Deserialize, Serialize};

/// Longest a client may hold an events request open.
pub const MAX_WAIT_MS: u64 = 30_000;

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    version: u32,
    #[serde(flatten)]
    body: T,
}

fn ok<T: Serialize>(body: T) -> Response {
    Json(Versioned { version: API_VERSION, body }).into_response()
}

pub struct ApiError(pub ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

type ApiResult = Result<Response, ApiError>;

/// Runs blocking service calls off the async workers.
async fn blocking<T, F>(svc: &Arc<Service>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServiceError::Exec(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueryBody {
    #[serde(default)]
    pub session_id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClarifyBody {
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfirmBody {
    pub rule_ids: Vec<String>,
    pub accept: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct EventsParams {
    /// Return events with a sequence number above this one.
    pub after: Option<u64>,
    /// Hold the request up to this long when nothing is new.
    pub wait_ms: Option<u64>,
}

#[derive(Serialize)]
struct EventsPage {
    run_id: String,
    events: Vec<mof_forge::executor::ExecutionEvent>,
    /// Pass back as `after` to resume.
    next: Option<u64>,
    finished: bool,
}

async fn post_query(State(svc): State<Arc<Service>>, Json(b): Json<QueryBody>) -> ApiResult {
    let r = blocking(&svc, move |s| s.submit_query(b.session_id.as_deref(), &b.text, &b.attachments)).await?;
    Ok(ok(r))
}

async fn post_clarify(State(svc): State<Arc<Service>>, Path(id): Path<String>, Json(b): Json<ClarifyBody>) -> ApiResult {
    let r = blocking(&svc, move |s| s.respond_clarification(&id, &b.text, &b.attachments)).await?;
    Ok(ok(r))
}

async fn post_confirm(State(svc): State<Arc<Service>>, Path(id): Path<String>, Json(b): Json<ConfirmBody>) -> ApiResult {
    if b.rule_ids.is_empty() {
        return Err(ApiError(ServiceError::BadRequest("rule_ids must not be empty".into())));
    }
    let r = blocking(&svc, move |s| s.confirm_correction(&id, &b.rule_ids, b.accept)).await?;
    Ok(ok(r))
}

async fn get_run(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let r = blocking(&svc, move |s| s.get_run(&id)).await?;
    Ok(ok(r))
}

async fn get_events(State(svc): State<Arc<Service>>, Path(id): Path<String>, Query(p): Query<EventsParams>) -> ApiResult {
    let wait = Duration::from_millis(p.wait_ms.unwrap_or(0).min(MAX_WAIT_MS));
    let page = blocking(&svc, move |s| {
        let events = if wait.is_zero() { s.stream_events(&id, p.after)? } else { s.wait_events(&id, p.after, wait)? };
        let finished = s.get_run(&id)?.finished;
        let next = events.last().map(|e| e.seq).or(p.after);
        Ok(EventsPage { run_id: id, events, next, finished })
    })
    .await?;
    Ok(ok(page))
}

async fn get_funnel(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let r = blocking(&svc, move |s| s.funnel(&id)).await?;
    Ok(ok(r))
}

async fn health() -> Response {
    ok(serde_json::json!({ "status": "ok" }))
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/queries", post(post_query))
        .route("/sessions/{id}/clarify", post(post_clarify))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/confirmations", post(post_confirm))
        .route("/runs/{id}/events", get(get_events))
        .route("/screenings/{id}/funnel", get(get_funnel))
        .with_state(svc)
}

pub async fn serve(svc: Arc<Service>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(svc)).await?;
    Ok(())
}
