//! Local HTTP JSON service over a workspace directory.

use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;

use seqdep::export::{graph_json, GraphRef, SCHEMA_VERSION};
use seqdep::llm::{SamplingParams, Transport};
use seqdep::{build_edg, Analysis, DependencyEdge, Diagnostic};

use crate::config::engine_for;
use crate::ops::{self, error_json, usage, EngineKind};
use crate::workspace::{self, Parsed, Workspace};

pub struct AppState {
    pub workspace: Workspace,
    /// Model backend; the llm engine is refused without one.
    pub transport: Option<Arc<dyn Transport>>,
    pub params: SamplingParams,
    pub max_in_flight: usize,
}

impl AppState {
    pub fn new(workspace: Workspace) -> Self {
        AppState {
            workspace,
            transport: None,
            params: SamplingParams::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub diagnostic: Diagnostic,
}

impl ApiError {
    fn bad_request(diagnostic: Diagnostic) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            diagnostic,
        }
    }

    fn not_found(diagnostic: Diagnostic) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            diagnostic,
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            diagnostic: usage(message),
        }
    }
}

impl From<io::Error> for ApiError {
    fn from(e: io::Error) -> Self {
        ApiError::internal(format!("workspace i/o error: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &error_json(&self.diagnostic))
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => ApiError::internal(format!("serialization failed: {e}")).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> Response {
    json_response(StatusCode::OK, value)
}

type ApiResult = Result<Response, ApiError>;

fn body_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(usage(format!("malformed request body: {e}"))))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/usecases", get(list_usecases))
        .route("/api/usecase/{name}", get(get_usecase))
        .route("/api/usecase/{name}/edg", get(get_edg))
        .route("/api/usecase/{name}/prune", get(get_prune))
        .route("/api/infer", post(post_infer))
        .route("/api/parse", post(post_parse))
        .route("/api/eval", post(post_eval))
        .fallback(|| async { ApiError::not_found(usage("no such endpoint")) })
        .with_state(state)
}

#[derive(Serialize)]
struct FileEntry {
    file: String,
    usecases: Vec<String>,
    diagnostics: Vec<Diagnostic>,
}

fn file_name(path: &std::path::Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

async fn list_usecases(State(state): State<Arc<AppState>>) -> ApiResult {
    let mut names = Vec::new();
    let mut files = Vec::new();
    for (path, parsed) in state.workspace.documents()? {
        let entry = match parsed.as_ref() {
            Ok(doc) => FileEntry {
                file: file_name(&path),
                usecases: doc.usecases.iter().map(|u| u.name.clone()).collect(),
                diagnostics: vec![],
            },
            Err(diags) => FileEntry {
                file: file_name(&path),
                usecases: vec![],
                diagnostics: diags.clone(),
            },
        };
        names.extend(entry.usecases.iter().cloned());
        files.push(entry);
    }
    Ok(ok(&json!({
        "schema_version": SCHEMA_VERSION,
        "usecases": names,
        "files": files,
    })))
}

async fn resolve(state: &AppState, name: &str) -> Result<(String, Parsed), ApiError> {
    match state.workspace.find(name)? {
        Some((path, parsed)) => Ok((file_name(&path), parsed)),
        None => Err(ApiError::not_found(
            seqdep::model::LookupError::UnknownUseCase(name.to_string()).into(),
        )),
    }
}

async fn get_usecase(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult {
    let (file, parsed) = resolve(&state, &name).await?;
    let (doc, uc) = workspace::usecase(&parsed, &name).expect("resolved use case");
    Ok(ok(&json!({
        "schema_version": SCHEMA_VERSION,
        "file": file,
        "usecase": uc,
        "apis": doc.apis,
        "tables": doc.tables,
    })))
}

async fn get_edg(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult {
    let (_, parsed) = resolve(&state, &name).await?;
    let (_, uc) = workspace::usecase(&parsed, &name).expect("resolved use case");
    Ok(ok(&graph_json(GraphRef::Edg(&build_edg(uc)))))
}

#[derive(Deserialize)]
struct PruneQuery {
    target: Option<String>,
}

async fn get_prune(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<PruneQuery>,
) -> ApiResult {
    let target = q
        .target
        .ok_or_else(|| ApiError::bad_request(usage("missing `target` query parameter")))?;
    let (_, parsed) = resolve(&state, &name).await?;
    let (doc, uc) = workspace::usecase(&parsed, &name).expect("resolved use case");
    let analysis = Analysis::new(doc, uc);
    let report = ops::prune_report(&analysis, &target).map_err(ApiError::bad_request)?;
    Ok(ok(&report))
}

#[derive(Deserialize)]
struct InferRequest {
    usecase: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    engine: Option<EngineKind>,
}

async fn post_infer(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: InferRequest = body_json(&body)?;
    let (_, parsed) = resolve(&state, &req.usecase).await?;
    let task_state = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let (doc, uc) = workspace::usecase(&parsed, &req.usecase).expect("resolved use case");
        let engine = engine_for(
            req.engine.unwrap_or(EngineKind::Rule),
            task_state.transport.as_deref(),
            task_state.params,
            task_state.max_in_flight,
        )?;
        let analysis = Analysis::new(doc, uc);
        ops::infer(&analysis, req.target.as_deref(), engine)
    })
    .await
    .map_err(|e| ApiError::internal(format!("inference task failed: {e}")))?;
    let report = result.map_err(ApiError::bad_request)?;
    Ok(ok(&report))
}

#[derive(Deserialize)]
struct ParseRequest {
    text: String,
}

async fn post_parse(body: Bytes) -> ApiResult {
    let req: ParseRequest = body_json(&body)?;
    Ok(ok(&ops::parse_report(&req.text, true)))
}

#[derive(Deserialize)]
struct EvalRequest {
    usecase: String,
    predicted: Vec<DependencyEdge>,
    gold: Vec<DependencyEdge>,
}

async fn post_eval(body: Bytes) -> ApiResult {
    let req: EvalRequest = body_json(&body)?;
    Ok(ok(&ops::eval_output(&[(req.usecase, req.predicted, req.gold)])))
}

#[derive(Debug)]
pub enum ServeError {
    Runtime(io::Error),
    Bind(String, io::Error),
    Serve(io::Error),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Runtime(e) => write!(f, "cannot start runtime: {e}"),
            ServeError::Bind(addr, e) => write!(f, "cannot listen on {addr}: {e}"),
            ServeError::Serve(e) => write!(f, "server failed: {e}"),
        }
    }
}

impl std::error::Error for ServeError {}

/// Serves until interrupted. `on_ready` receives the bound address.
pub fn serve(addr: &str, state: Arc<AppState>, on_ready: impl FnOnce(std::net::SocketAddr)) -> Result<(), ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;
    // Keeps the last reference to the state outside the runtime: a blocking
    // HTTP client must not be dropped on a runtime thread.
    let keep = state.clone();
    let result = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| ServeError::Bind(addr.to_string(), e))?;
        if let Ok(local) = listener.local_addr() {
            on_ready(local);
        }
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(ServeError::Serve)
    });
    drop(rt);
    drop(keep);
    result
}
