//! HTTP JSON API over a [`Store`].
//!
//! Every mutating call carries the record version the client last saw; a
//! mismatch is answered with 409 and the record is left alone.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State as AxumState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use medthink::data::Manifest;

use crate::cleaning::{detect_inconsistencies, group_by_image, CleaningConfig, CleaningReport};
use crate::error::Error;
use crate::export::{export_annotated, ExportMode};
use crate::generator::{build_request, generation_mutation, Generator, PromptTemplate};
use crate::record::{now, Check, Mutation, ReviewVerdict, State};
use crate::store::Store;

pub const DEFAULT_QUEUE_LIMIT: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory file image references are resolved against.
    pub base_dir: PathBuf,
    pub template: PromptTemplate,
    /// Where a successful export is also written.
    pub export_path: Option<PathBuf>,
}

pub struct AppState {
    store: Mutex<Store>,
    manifest: Manifest,
    generator: Arc<dyn Generator>,
    config: ServiceConfig,
    conflicts: CleaningReport,
    in_flight: Mutex<HashSet<String>>,
}

impl AppState {
    /// The conflict worklist is computed once, from the local rules only.
    pub fn new(store: Store, manifest: Manifest, generator: Arc<dyn Generator>, config: ServiceConfig) -> Result<Self, Error> {
        let conflicts = detect_inconsistencies(&group_by_image(&manifest.samples), &CleaningConfig::default(), None)?;
        Ok(Self {
            store: Mutex::new(store),
            manifest,
            generator,
            config,
            conflicts,
            in_flight: Mutex::new(HashSet::new()),
        })
    }

    pub fn with_conflicts(mut self, conflicts: CleaningReport) -> Self {
        self.conflicts = conflicts;
        self
    }

    pub fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().expect("store lock poisoned")
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/records/{id}", get(record))
        .route("/api/records/{id}/generate", post(generate))
        .route("/api/records/{id}/verdict", post(verdict))
        .route("/api/records/{id}/expert", post(expert))
        .route("/api/conflicts", get(conflicts))
        .route("/api/export", post(export))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

struct ApiError(Error, Option<serde_json::Value>);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e, None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::Conflict { .. } | Error::Busy(_) => (StatusCode::CONFLICT, "conflict"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Contract(_) => (StatusCode::UNPROCESSABLE_ENTITY, "contract"),
            Error::Unresolved { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unresolved"),
            Error::Generator(_) => (StatusCode::BAD_GATEWAY, "generator"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut body = json!({ "error": kind, "message": self.0.to_string() });
        match &self.0 {
            Error::Conflict { id, expected, actual } => {
                body["id"] = json!(id);
                body["expected"] = json!(expected);
                body["actual"] = json!(actual);
            }
            Error::Unresolved { ids } => body["ids"] = json!(ids),
            _ => {}
        }
        if let Some(record) = self.1 {
            body["record"] = record;
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
struct QueueParams {
    state: Option<String>,
    limit: Option<usize>,
}

async fn queue(AxumState(app): AxumState<Arc<AppState>>, Query(p): Query<QueueParams>) -> ApiResult<Response> {
    let state = p.state.as_deref().map(str::parse::<State>).transpose()?;
    let store = app.store();
    let records = store.queue(state, p.limit.unwrap_or(DEFAULT_QUEUE_LIMIT));
    Ok(Json(records).into_response())
}

async fn record(AxumState(app): AxumState<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(app.store().get(&id)?).into_response())
}

#[derive(Debug, Deserialize)]
struct VersionBody {
    version: u64,
}

/// Removes the id from the in-flight set however the request ends.
struct InFlight<'a> {
    set: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set.lock().expect("in-flight lock poisoned").remove(&self.id);
    }
}

async fn generate(
    AxumState(app): AxumState<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<VersionBody>,
) -> ApiResult<Response> {
    let request = {
        let store = app.store();
        let rec = store.get(&id)?;
        rec.check_version(body.version)?;
        rec.admits(&Mutation::GenerationFailed { error: String::new(), timestamp: 0 })?;
        build_request(rec, &app.config.template, &app.config.base_dir)?
    };
    if !app.in_flight.lock().expect("in-flight lock poisoned").insert(id.clone()) {
        return Err(Error::Busy(id).into());
    }
    let _guard = InFlight { set: &app.in_flight, id: id.clone() };

    let generator = Arc::clone(&app.generator);
    let mutation = tokio::task::spawn_blocking(move || generation_mutation(generator.as_ref(), &request))
        .await
        .map_err(|e| Error::Generator(format!("generator task failed: {e}")))?;
    let failure = match &mutation {
        Mutation::GenerationFailed { error, .. } => Some(error.clone()),
        _ => None,
    };
    let mut store = app.store();
    let rec = store.apply(&id, body.version, mutation)?;
    match failure {
        Some(msg) => Err(ApiError(Error::Generator(msg), Some(json!(rec)))),
        None => Ok(Json(rec).into_response()),
    }
}

/// Accepts `"pass"`/`"fail"` or a boolean.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CheckInput {
    Bool(bool),
    Check(Check),
}

impl From<CheckInput> for Check {
    fn from(c: CheckInput) -> Self {
        match c {
            CheckInput::Bool(b) => Check::from_bool(b),
            CheckInput::Check(c) => c,
        }
    }
}

#[derive(Debug, Deserialize)]
struct VerdictBody {
    version: u64,
    coherence: CheckInput,
    relevance: CheckInput,
    accuracy: CheckInput,
    #[serde(default)]
    note: String,
    #[serde(default)]
    reviewer: String,
}

async fn verdict(
    AxumState(app): AxumState<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<VerdictBody>,
) -> ApiResult<Response> {
    let verdict = ReviewVerdict {
        coherence: body.coherence.into(),
        relevance: body.relevance.into(),
        accuracy: body.accuracy.into(),
        note: body.note,
        reviewer: body.reviewer,
        timestamp: now(),
    };
    let mut store = app.store();
    Ok(Json(store.apply(&id, body.version, Mutation::Reviewed { verdict })?).into_response())
}

#[derive(Debug, Deserialize)]
struct ExpertBody {
    version: u64,
    rationale: String,
    #[serde(default)]
    reviewer: String,
}

async fn expert(
    AxumState(app): AxumState<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<ExpertBody>,
) -> ApiResult<Response> {
    let m = Mutation::ExpertWritten {
        rationale: body.rationale,
        reviewer: body.reviewer,
        timestamp: now(),
    };
    let mut store = app.store();
    Ok(Json(store.apply(&id, body.version, m)?).into_response())
}

async fn conflicts(AxumState(app): AxumState<Arc<AppState>>) -> Json<CleaningReport> {
    Json(app.conflicts.clone())
}

#[derive(Debug, Default, Deserialize)]
struct ExportBody {
    #[serde(default)]
    mode: ExportMode,
}

#[derive(Debug, Serialize)]
struct ExportReply {
    mode: ExportMode,
    exported: Vec<String>,
    skipped: Vec<String>,
    manifest: String,
}

async fn export(AxumState(app): AxumState<Arc<AppState>>, Json(body): Json<ExportBody>) -> ApiResult<Response> {
    let outcome = {
        let store = app.store();
        export_annotated(store.records(), &app.manifest, body.mode)?
    };
    let manifest = outcome.manifest.to_jsonl();
    if let Some(path) = &app.config.export_path {
        std::fs::write(path, &manifest).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    Ok(Json(ExportReply {
        mode: body.mode,
        exported: outcome.exported,
        skipped: outcome.skipped,
        manifest,
    })
    .into_response())
}
