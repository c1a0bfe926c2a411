//! JSON HTTP API over the orchestrator.
//!
//! Session state lives on disk; every request loads it, applies one
//! operation, and the orchestrator saves it again. Requests for the same
//! session are serialized with a per-session lock; a request that finds
//! the lock taken is refused as `bad_stage` instead of queued.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ddap_core::orchestrator::ExecutionRecord;
use ddap_core::store::is_valid_session_id;
use ddap_core::{
    ArtifactRef, ConversationTurn, Error, ErrorClass, ExecutionResult, Orchestrator, Profile,
    SessionState, Stage, TurnKind, TurnResult,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, OwnedMutexGuard};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorClass,
    pub detail: String,
}

impl ApiError {
    pub fn new(code: ErrorClass, detail: impl Into<String>) -> Self {
        ApiError {
            code,
            detail: detail.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::BadStage => StatusCode::CONFLICT,
            ErrorClass::ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::BackendFailure | ErrorClass::GuardrailExhausted => StatusCode::BAD_GATEWAY,
            ErrorClass::SandboxError => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(e.class(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Shared service state.
#[derive(Clone)]
pub struct App {
    orch: Arc<Orchestrator>,
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl App {
    pub fn new(orch: Orchestrator) -> Self {
        App {
            orch: Arc::new(orch),
            locks: Arc::default(),
        }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    fn lock(&self, session_id: &str) -> ApiResult<OwnedMutexGuard<()>> {
        if !is_valid_session_id(session_id) {
            return Err(ApiError::new(
                ErrorClass::NotFound,
                format!("session {session_id} not found"),
            ));
        }
        let lock = self
            .locks
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_default()
            .clone();
        lock.try_lock_owned().map_err(|_| {
            ApiError::new(
                ErrorClass::BadStage,
                format!("session {session_id} is busy with another request"),
            )
        })
    }

    /// Runs `f` against the stored state of `session_id` on a blocking thread.
    async fn with_session<T, F>(&self, session_id: &str, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Orchestrator, &mut SessionState) -> ddap_core::Result<T> + Send + 'static,
    {
        let guard = self.lock(session_id)?;
        let orch = self.orch.clone();
        let id = session_id.to_string();
        blocking(move || {
            let _guard = guard;
            let mut state = orch.load_session(&id)?;
            f(&orch, &mut state)
        })
        .await
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ddap_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => {
            tracing::error!("request task failed: {e}");
            Err(ApiError::new(
                ErrorClass::BackendFailure,
                "internal error while handling the request",
            ))
        }
    }
}

/// Parses a JSON body; an empty body reads as `T::default()`.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(
            ErrorClass::ValidationFailed,
            format!("bad request body: {e}"),
        )
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefView {
    pub id: String,
    #[serde(flatten)]
    pub r: ArtifactRef,
}

impl From<&ArtifactRef> for RefView {
    fn from(r: &ArtifactRef) -> Self {
        RefView {
            id: r.id(),
            r: r.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct TurnView {
    kind: TurnKind,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    artifact_ref: Option<RefView>,
    stage: Stage,
}

impl From<TurnResult> for TurnView {
    fn from(t: TurnResult) -> Self {
        TurnView {
            kind: t.kind,
            message: t.message,
            artifact_ref: t.artifact_ref.as_ref().map(RefView::from),
            stage: t.stage,
        }
    }
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    stage: Stage,
    profile: Option<Profile>,
    last_message: Option<String>,
    artifact_refs: BTreeMap<String, RefView>,
    code_refs: Vec<RefView>,
    selected_candidate: Option<u8>,
    reprompt_counts: BTreeMap<String, u32>,
    executions: Vec<ExecutionRecord>,
    conversations: BTreeMap<&'static str, Vec<ConversationTurn>>,
}

impl From<&SessionState> for SessionView {
    fn from(s: &SessionState) -> Self {
        SessionView {
            session_id: s.session_id().to_string(),
            stage: s.stage(),
            profile: s.profile().cloned(),
            last_message: s.last_message().map(str::to_string),
            artifact_refs: s
                .artifact_refs()
                .iter()
                .map(|(k, r)| (k.to_string(), r.into()))
                .collect(),
            code_refs: s.code_refs().iter().map(RefView::from).collect(),
            selected_candidate: s.selected_candidate(),
            reprompt_counts: s.reprompt_counts().clone(),
            executions: s.executions().to_vec(),
            conversations: Stage::ORDER
                .iter()
                .filter(|st| !s.conversation(**st).is_empty())
                .map(|st| (st.as_str(), s.conversation(*st).to_vec()))
                .collect(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    profile: Option<Profile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportBody {
    #[serde(rename = "ref")]
    artifact: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectBody {
    index: Option<u8>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeBody {
    candidate_index: Option<u8>,
}

fn required<T>(v: Option<T>, field: &str) -> ApiResult<T> {
    v.ok_or_else(|| {
        ApiError::new(
            ErrorClass::ValidationFailed,
            format!("request body needs `{field}`"),
        )
    })
}

pub fn router(app: App) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/artifacts", get(list_artifacts))
        .route("/api/sessions/{id}/import", post(import))
        .route("/api/sessions/{id}/preprocessing", post(preprocessing))
        .route("/api/sessions/{id}/pipelines", post(pipelines))
        .route("/api/sessions/{id}/pipelines/select", post(select))
        .route("/api/sessions/{id}/code", post(code))
        .route("/api/sessions/{id}/finalize", post(finalize))
        .route("/api/artifacts/{ref}", get(get_artifact))
        .route("/api/code/{ref}/execute", post(execute))
        .route("/api/code/{ref}/repair", post(repair))
        .fallback(|| async { ApiError::new(ErrorClass::NotFound, "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorClass::NotFound, "method not allowed on this endpoint")
        })
        .with_state(app)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn create_session(State(app): State<App>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateBody = body(&raw)?;
    let orch = app.orch.clone();
    let state = blocking(move || orch.create_session(req.profile)).await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({"session_id": state.session_id(), "stage": state.stage()})),
    ))
}

async fn get_session(
    State(app): State<App>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let view = app
        .with_session(&id, |_, s| Ok(SessionView::from(&*s)))
        .await?;
    Ok(Json(view))
}

async fn post_message(
    State(app): State<App>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<TurnView>> {
    let text = required(body::<MessageBody>(&raw)?.text, "text")?;
    let turn = app
        .with_session(&id, move |o, s| o.submit_user_message(s, &text))
        .await?;
    Ok(Json(turn.into()))
}

async fn list_artifacts(
    State(app): State<App>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<RefView>>> {
    let refs = app
        .with_session(&id, |o, s| Ok(o.store().list(s.session_id())?))
        .await?;
    Ok(Json(refs.iter().map(RefView::from).collect()))
}

async fn import(
    State(app): State<App>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let source = required(body::<ImportBody>(&raw)?.artifact, "ref")?;
    let (r, stage) = app
        .with_session(&id, move |o, s| {
            Ok((o.import_artifact(s, &source)?, s.stage()))
        })
        .await?;
    Ok(Json(
        serde_json::json!({"artifact_ref": RefView::from(&r), "stage": stage}),
    ))
}

async fn preprocessing(
    State(app): State<App>,
    Path(id): Path<String>,
) -> ApiResult<Json<TurnView>> {
    let turn = app
        .with_session(&id, |o, s| o.generate_preprocessing(s))
        .await?;
    Ok(Json(turn.into()))
}

async fn pipelines(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<TurnView>> {
    let turn = app
        .with_session(&id, |o, s| o.generate_pipelines(s))
        .await?;
    Ok(Json(turn.into()))
}

async fn select(
    State(app): State<App>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<SessionView>> {
    let index = required(body::<SelectBody>(&raw)?.index, "index")?;
    let view = app
        .with_session(&id, move |o, s| {
            o.select_pipeline(s, index)?;
            Ok(SessionView::from(&*s))
        })
        .await?;
    Ok(Json(view))
}

async fn code(
    State(app): State<App>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<TurnView>> {
    let candidate = body::<CodeBody>(&raw)?.candidate_index;
    let turn = app
        .with_session(&id, move |o, s| o.generate_code(s, candidate))
        .await?;
    Ok(Json(turn.into()))
}

async fn finalize(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let view = app
        .with_session(&id, |o, s| {
            o.finalize(s)?;
            Ok(SessionView::from(&*s))
        })
        .await?;
    Ok(Json(view))
}

async fn get_artifact(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Response> {
    let orch = app.orch.clone();
    let text = blocking(move || {
        let r = orch.store().resolve(&id)?;
        Ok(orch.store().load_text(&r)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

fn resolve_code(app: &App, id: &str) -> ApiResult<ArtifactRef> {
    let r = app.orch.store().resolve(id).map_err(Error::from)?;
    if r.candidate_index.is_none() {
        return Err(ApiError::new(
            ErrorClass::ValidationFailed,
            format!("{id} is not a code artifact"),
        ));
    }
    Ok(r)
}

#[derive(Debug, Serialize)]
struct ExecutionView {
    code_ref: RefView,
    result: ExecutionResult,
    stage: Stage,
}

async fn execute(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<ExecutionView>> {
    let r = resolve_code(&app, &id)?;
    let session = r.session_id.clone();
    let view = app
        .with_session(&session, move |o, s| {
            let result = o.execute(s, &r)?;
            Ok(ExecutionView {
                code_ref: (&r).into(),
                result,
                stage: s.stage(),
            })
        })
        .await?;
    Ok(Json(view))
}

async fn repair(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<TurnView>> {
    let r = resolve_code(&app, &id)?;
    let session = r.session_id.clone();
    let turn = app
        .with_session(&session, move |o, s| o.repair_last_failure(s, &r))
        .await?;
    Ok(Json(turn.into()))
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: App,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` and serves `app` on a background thread.
pub fn spawn(addr: SocketAddr, app: App) -> io::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let thread = thread::Builder::new()
        .name("ddap-api".into())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, app, async {
                    let _ = stopped.await;
                })
                .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        thread: Some(thread),
    })
}
