//! Local JSON-over-HTTP API. Reads run concurrently; every mutation takes the
//! write lock, and pipeline runs go through a single-worker queue.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::future::Future;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, watch, Mutex};
use tokio::task::JoinHandle;

use saqd_core::comparative::Bin;
use saqd_core::project::{Project, RunOverrides, RunStatus};
use saqd_core::Error;

use crate::{views, API_VERSION};

pub const DEFAULT_TOP_WORDS: usize = 10;
pub const DEFAULT_TOP_DOCS: usize = 5;

/// HTTP status for a core error.
pub fn status_of(e: &Error) -> StatusCode {
    use Error::*;
    match e {
        UnknownRun(_) | UnknownSession(_) | UnknownAssemblage(_) | UnknownCorpus(_) | UnknownFeedback(_) | UnknownLabelSet(_) | UnknownPhase(_) | UnknownProject(_) | NoRuns => StatusCode::NOT_FOUND,
        RunInProgress | RunNotDone(_) | SessionClosed(_) | CorpusExists(_) | ProjectExists(_) | PortInUse(_) => StatusCode::CONFLICT,
        StageFailed { source, .. } => status_of(source),
        e if !e.is_user_error() => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

/// Structured context for errors that carry more than a message.
pub fn details_of(e: &Error) -> Value {
    match e {
        Error::UnresolvedTopics(t) => json!({ "topics": t }),
        Error::CategoryOverlap(t) => json!({ "topic": t }),
        Error::BadTopic { topic, k } => json!({ "topic": topic, "k": k }),
        Error::KTooLarge { k, tokens } => json!({ "k": k, "tokens": tokens }),
        Error::WrongGroupCount { kind, expected, found } => json!({ "test": kind, "expected": expected, "found": found }),
        Error::TinySharedVocab { shared, required } => json!({ "shared": shared, "required": required }),
        Error::StageFailed { stage, source } => json!({ "stage": stage, "cause": details_of(source) }),
        _ => json!({}),
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    details: Value,
}

impl ApiError {
    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, code: code.into(), message: message.into(), details: json!({}) }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self { status: status_of(&e), code: e.code().to_string(), message: e.to_string(), details: details_of(&e) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message, "details": self.details }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    project: Arc<Project>,
    writes: Arc<Mutex<()>>,
    jobs: mpsc::UnboundedSender<String>,
}

/// Background worker executing queued runs one at a time.
pub struct Worker {
    stop: watch::Sender<bool>,
    handle: JoinHandle<()>,
}

impl Worker {
    /// Lets the current run finish, then stops. Runs still queued stay queued
    /// on disk and are picked up by the next service start.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.handle.await;
    }
}

impl AppState {
    /// Opens the state and starts the run worker. Runs interrupted by a previous
    /// process are marked failed; runs still queued are re-enqueued.
    pub fn start(project: Project) -> Result<(Self, Worker), Error> {
        let project = Arc::new(project);
        project.recover_interrupted()?;
        let (tx, rx) = mpsc::unbounded_channel();
        for r in project.runs()? {
            if r.status == RunStatus::Queued {
                let _ = tx.send(r.id);
            }
        }
        let (stop, stop_rx) = watch::channel(false);
        let handle = tokio::spawn(run_worker(project.clone(), rx, stop_rx));
        let state = Self { project, writes: Arc::new(Mutex::new(())), jobs: tx };
        Ok((state, Worker { stop, handle }))
    }
}

async fn run_worker(project: Arc<Project>, mut jobs: mpsc::UnboundedReceiver<String>, mut stop: watch::Receiver<bool>) {
    loop {
        let id = tokio::select! {
            biased;
            _ = stop.changed() => break,
            next = jobs.recv() => match next {
                Some(id) => id,
                None => break,
            },
        };
        loop {
            let p = project.clone();
            let job = id.clone();
            match tokio::task::spawn_blocking(move || p.execute_run(&job)).await {
                // another process holds the run lock; wait for it
                Ok(Err(Error::RunInProgress)) => {
                    tokio::select! {
                        _ = stop.changed() => return,
                        _ = tokio::time::sleep(Duration::from_millis(250)) => continue,
                    }
                }
                _ => break,
            }
        }
    }
}

/// Runs a blocking closure against the project off the async executor.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Project) -> Result<T, Error> + Send + 'static,
{
    let p = state.project.clone();
    tokio::task::spawn_blocking(move || f(&p))
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "INTERNAL".into(), message: e.to_string(), details: json!({}) })?
        .map_err(ApiError::from)
}

/// Same as [`blocking`] but holding the project write lock.
async fn mutate<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Project) -> Result<T, Error> + Send + 'static,
{
    let _guard = state.writes.lock().await;
    blocking(state, f).await
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let src: &[u8] = if bytes.is_empty() { b"{}" } else { bytes };
    serde_json::from_slice(src).map_err(|e| ApiError::bad_request("BAD_REQUEST", format!("invalid request body: {e}")))
}

fn index(name: &str, raw: &str) -> ApiResult<usize> {
    raw.parse().map_err(|_| ApiError::bad_request("BAD_REQUEST", format!("`{name}` must be a non-negative integer, got `{raw}`")))
}

fn query_index(q: &HashMap<String, String>, name: &str, default: Option<usize>) -> ApiResult<usize> {
    match (q.get(name), default) {
        (Some(raw), _) => index(name, raw),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(ApiError::bad_request("BAD_REQUEST", format!("query parameter `{name}` is required"))),
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/topics", get(run_topics))
        .route("/runs/{id}/topics/{k}/docs", get(topic_docs))
        .route("/runs/{id}/coherence", get(run_coherence))
        .route("/runs/{id}/prevalence", get(run_prevalence))
        .route("/runs/{id}/trend", get(run_trend))
        .route("/compare", post(compare))
        .route("/sessions", get(list_sessions).post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/sessions/{id}/stopwords", post(flag_stopwords))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/assemblages", get(list_assemblages))
        .route("/fit/{assemblage}", get(get_fit));
    Router::new()
        .nest("/api", api)
        .fallback(|| async { ApiError { status: StatusCode::NOT_FOUND, code: "NOT_FOUND".into(), message: "no such endpoint".into(), details: json!({}) } })
        .layer(axum::middleware::map_response(|mut r: Response| async move {
            r.headers_mut().insert("x-api-version", HeaderValue::from_static(API_VERSION));
            r
        }))
        .with_state(state)
}

async fn list_runs(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, |p| p.runs()).await?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunRequest {
    pub phase: Option<String>,
    pub assemblage: Option<String>,
    pub overrides: RunOverrides,
}

async fn create_run(State(s): State<AppState>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: RunRequest = body(&bytes)?;
    let rec = mutate(&s, move |p| p.create_run(req.phase.as_deref(), req.assemblage.as_deref(), &req.overrides)).await?;
    s.jobs
        .send(rec.id.clone())
        .map_err(|_| ApiError { status: StatusCode::SERVICE_UNAVAILABLE, code: "SHUTTING_DOWN".into(), message: "run queue is closed".into(), details: json!({}) })?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": rec.id, "run": rec }))))
}

async fn get_run(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, move |p| p.run(&id)).await?))
}

async fn run_topics(State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult<impl IntoResponse> {
    let n = query_index(&q, "n", Some(DEFAULT_TOP_WORDS))?;
    Ok(Json(blocking(&s, move |p| views::topics(p, &id, n)).await?))
}

async fn topic_docs(State(s): State<AppState>, UrlPath((id, k)): UrlPath<(String, String)>, Query(q): Query<HashMap<String, String>>) -> ApiResult<impl IntoResponse> {
    let topic = index("k", &k)?;
    let n = query_index(&q, "n", Some(DEFAULT_TOP_DOCS))?;
    Ok(Json(blocking(&s, move |p| views::topic_docs(p, &id, topic, n)).await?))
}

async fn run_coherence(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, move |p| Ok(p.load_run(&id)?.coherence.clone())).await?))
}

async fn run_prevalence(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, move |p| views::prevalence(p, &id)).await?))
}

async fn run_trend(State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult<impl IntoResponse> {
    let topic = query_index(&q, "topic", None)?;
    let bin: Bin = q.get("bin").map(|b| b.parse()).transpose()?.unwrap_or(Bin::Year);
    Ok(Json(blocking(&s, move |p| p.trend(&id, topic, bin)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    run_a: String,
    run_b: String,
}

async fn compare(State(s): State<AppState>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CompareRequest = body(&bytes)?;
    Ok(Json(blocking(&s, move |p| p.compare(&req.run_a, &req.run_b)).await?))
}

async fn list_sessions(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, |p| p.sessions()).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    run: String,
    coders: Vec<String>,
    #[serde(default = "default_actor")]
    actor: String,
}

fn default_actor() -> String {
    "api".to_string()
}

async fn open_session(State(s): State<AppState>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: OpenSession = body(&bytes)?;
    let session = mutate(&s, move |p| p.open_session(&req.run, &req.coders, &req.actor, Utc::now())).await?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, move |p| p.session(&id)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    coder: String,
    topic: usize,
    label: String,
}

#[derive(Debug, Serialize)]
pub struct LabelResponse {
    pub topic: usize,
    pub status: saqd_core::interpretation::TopicStatus,
    pub agreement: saqd_core::interpretation::Agreement,
}

async fn submit_label(State(s): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: LabelRequest = body(&bytes)?;
    let out = mutate(&s, move |p| {
        let (session, status) = p.submit_label(&id, &req.coder, req.topic, &req.label, Utc::now())?;
        Ok(LabelResponse { topic: req.topic, status, agreement: session.compute_agreement() })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StopwordRequest {
    words: BTreeSet<String>,
    #[serde(default)]
    note: String,
    #[serde(default = "default_actor")]
    actor: String,
}

async fn flag_stopwords(State(s): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: StopwordRequest = body(&bytes)?;
    let rec = mutate(&s, move |p| p.flag_stopwords(&id, &req.words, &req.note, &req.actor, Utc::now())).await?;
    Ok(match rec {
        Some(r) => (StatusCode::CREATED, Json(json!(r))),
        None => (StatusCode::OK, Json(Value::Null)),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FinalizeRequest {
    resolutions: BTreeMap<usize, String>,
    actor: Option<String>,
    auditor: Option<String>,
    audit_note: String,
}

async fn finalize(State(s): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: FinalizeRequest = body(&bytes)?;
    let ls = mutate(&s, move |p| {
        let actor = req.actor.unwrap_or_else(default_actor);
        let auditor = req.auditor.as_deref().map(|a| (a, req.audit_note.as_str()));
        p.finalize_labels(&id, &req.resolutions, &actor, auditor, Utc::now())
    })
    .await?;
    Ok(Json(ls))
}

async fn list_assemblages(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, |p| p.assemblages()).await?))
}

async fn get_fit(State(s): State<AppState>, UrlPath(name): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&s, move |p| p.fit(&name)).await?))
}

/// Serves `project_dir` on `host:port` until `shutdown` resolves, then lets
/// any running job finish before returning.
pub async fn serve<F>(project_dir: &Path, host: &str, port: u16, shutdown: F, on_ready: impl FnOnce(SocketAddr)) -> Result<(), Error>
where
    F: Future<Output = ()> + Send + 'static,
{
    let project = Project::open(project_dir)?;
    let listener = match tokio::net::TcpListener::bind((host, port)).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(Error::PortInUse(port)),
        Err(e) => return Err(e.into()),
    };
    let (state, worker) = AppState::start(project)?;
    on_ready(listener.local_addr()?);
    let served = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    worker.shutdown().await;
    served.map_err(Error::from)
}
