//! REST service backing the annotation tool.
//!
//! | method | path | body / result |
//! |--------|------|---------------|
//! | GET | `/api/problems?offset=&limit=` | `{total, offset, limit, items}` |
//! | GET | `/api/problems/{id}` | problem |
//! | GET | `/api/annotations/{id}` | canonical annotation; version in `x-annotation-version` |
//! | POST | `/api/annotations?base_version=` | 201 `{version, conflict, annotation}`, 422 `{violations, messages}` |
//! | GET | `/api/export` | `{annotations: [...]}` bundle |
//! | GET | `/api/stats?tau=` | `{tau, reports, stats}` |
//!
//! Saves are serialized per problem and written atomically as
//! `<dir>/<problem_id>.tomann.json`. Concurrent saves resolve last writer
//! wins; the response flags a conflict when `base_version` is stale.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{write_atomic, HarnessError};
use crate::complexity::{
    aggregate_stats, complexity, BenchmarkReport, ComplexityDocument, DEFAULT_TAU,
};
use crate::types::{
    to_canonical_json, validate_annotation, AnnotationFile, AnnotationSet, ProblemInstance,
    Violation, ANNOTATION_EXTENSION,
};

pub const VERSION_HEADER: &str = "x-annotation-version";
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {message}")]
    BadAnnotationFile { path: String, message: String },
}

#[derive(Debug)]
pub enum SaveError {
    UnknownProblem(String),
    Invalid(Vec<Violation>),
    Storage(HarnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaveOutcome {
    pub version: u64,
    /// The save replaced a version the client had not seen.
    pub conflict: bool,
    pub annotation: AnnotationSet,
}

#[derive(Debug, Clone)]
struct Entry {
    annotation: AnnotationSet,
    version: u64,
}

/// Problems plus their saved annotations.
pub struct AnnotationStore {
    problems: Vec<ProblemInstance>,
    index: HashMap<String, usize>,
    dir: PathBuf,
    entries: Mutex<HashMap<String, Entry>>,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("problems", &self.problems.len())
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

fn file_name(problem_id: &str) -> String {
    let safe: String = problem_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}{ANNOTATION_EXTENSION}")
}

impl AnnotationStore {
    /// Loads every annotation file in `dir` (created if missing). Files for
    /// unknown problems are skipped with a warning; invalid ones are errors.
    pub fn open(problems: Vec<ProblemInstance>, dir: &Path) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(dir)?;
        let index: HashMap<String, usize> = problems
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        let mut entries = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(ANNOTATION_EXTENSION))
            .collect();
        paths.sort();
        for path in paths {
            let bad = |message: String| ServiceError::BadAnnotationFile {
                path: path.display().to_string(),
                message,
            };
            let text = std::fs::read_to_string(&path)?;
            let file: AnnotationFile =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            for a in file.into_vec() {
                let Some(&i) = index.get(&a.problem_id) else {
                    log::warn!("{}: no problem `{}`; skipped", path.display(), a.problem_id);
                    continue;
                };
                let violations = validate_annotation(&a, &problems[i]);
                if !violations.is_empty() {
                    let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                    return Err(bad(msgs.join("; ")));
                }
                entries.insert(
                    a.problem_id.clone(),
                    Entry {
                        annotation: a,
                        version: 1,
                    },
                );
            }
        }
        Ok(AnnotationStore {
            problems,
            index,
            dir: dir.to_path_buf(),
            entries: Mutex::new(entries),
            write_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn problems(&self) -> &[ProblemInstance] {
        &self.problems
    }

    pub fn problem(&self, id: &str) -> Option<&ProblemInstance> {
        self.index.get(id).map(|&i| &self.problems[i])
    }

    pub fn get(&self, id: &str) -> Option<(AnnotationSet, u64)> {
        self.entries
            .lock()
            .unwrap()
            .get(id)
            .map(|e| (e.annotation.clone(), e.version))
    }

    pub fn save(
        &self,
        mut a: AnnotationSet,
        base_version: Option<u64>,
    ) -> Result<SaveOutcome, SaveError> {
        let p = self
            .problem(&a.problem_id)
            .ok_or_else(|| SaveError::UnknownProblem(a.problem_id.clone()))?;
        let violations = validate_annotation(&a, p);
        if !violations.is_empty() {
            return Err(SaveError::Invalid(violations));
        }
        a.normalize();
        let lock = self
            .write_locks
            .lock()
            .unwrap()
            .entry(a.problem_id.clone())
            .or_default()
            .clone();
        let _guard = lock.lock().unwrap();
        let current = self.get(&a.problem_id).map(|(_, v)| v).unwrap_or(0);
        let body = to_canonical_json(&a);
        write_atomic(&self.dir.join(file_name(&a.problem_id)), body.as_bytes())
            .map_err(SaveError::Storage)?;
        let version = current + 1;
        self.entries.lock().unwrap().insert(
            a.problem_id.clone(),
            Entry {
                annotation: a.clone(),
                version,
            },
        );
        Ok(SaveOutcome {
            version,
            conflict: base_version.is_some_and(|b| b != current),
            annotation: a,
        })
    }

    /// All annotations, ordered by problem id.
    pub fn export(&self) -> AnnotationFile {
        let entries = self.entries.lock().unwrap();
        let mut annotations: Vec<AnnotationSet> =
            entries.values().map(|e| e.annotation.clone()).collect();
        annotations.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
        AnnotationFile::Bundle { annotations }
    }

    /// Complexity of every saved annotation and per-benchmark statistics.
    pub fn stats(
        &self,
        tau: f64,
    ) -> Result<ComplexityDocument, crate::complexity::ComplexityError> {
        let AnnotationFile::Bundle { annotations } = self.export() else {
            unreachable!("export always yields a bundle")
        };
        let mut reports = Vec::new();
        let mut groups = BTreeMap::new();
        for a in &annotations {
            let benchmark = self
                .problem(&a.problem_id)
                .expect("stored annotations have problems")
                .benchmark;
            let report = complexity(a, tau)?;
            groups
                .entry(benchmark)
                .or_insert_with(Vec::new)
                .push(report.clone());
            reports.push(BenchmarkReport { benchmark, report });
        }
        Ok(ComplexityDocument {
            tau: vec![tau],
            reports,
            stats: aggregate_stats(&groups)?,
        })
    }
}

#[derive(Debug, Deserialize)]
struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct SaveQuery {
    base_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct TauQuery {
    tau: Option<f64>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn canonical(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_problems(
    State(store): State<Arc<AnnotationStore>>,
    Query(page): Query<Page>,
) -> Response {
    let total = store.problems.len();
    let offset = page.offset.unwrap_or(0).min(total);
    let limit = page.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let items = &store.problems[offset..(offset + limit).min(total)];
    Json(json!({ "total": total, "offset": offset, "limit": limit, "items": items }))
        .into_response()
}

async fn get_problem(
    State(store): State<Arc<AnnotationStore>>,
    UrlPath(id): UrlPath<String>,
) -> Response {
    match store.problem(&id) {
        Some(p) => canonical(StatusCode::OK, to_canonical_json(p)),
        None => error(StatusCode::NOT_FOUND, format!("no problem `{id}`")),
    }
}

async fn get_annotation(
    State(store): State<Arc<AnnotationStore>>,
    UrlPath(id): UrlPath<String>,
) -> Response {
    match store.get(&id) {
        Some((a, version)) => {
            let mut r = canonical(StatusCode::OK, to_canonical_json(&a));
            r.headers_mut()
                .insert(VERSION_HEADER, HeaderValue::from(version));
            r
        }
        None if store.problem(&id).is_some() => error(
            StatusCode::NOT_FOUND,
            format!("problem `{id}` has no annotation yet"),
        ),
        None => error(StatusCode::NOT_FOUND, format!("no problem `{id}`")),
    }
}

async fn post_annotation(
    State(store): State<Arc<AnnotationStore>>,
    Query(q): Query<SaveQuery>,
    body: Bytes,
) -> Response {
    let a: AnnotationSet = match serde_json::from_slice(&body) {
        Ok(a) => a,
        Err(e) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("malformed annotation: {e}"),
            )
        }
    };
    let result = tokio::task::spawn_blocking(move || store.save(a, q.base_version)).await;
    match result {
        Ok(Ok(outcome)) => {
            let mut r = (StatusCode::CREATED, Json(&outcome)).into_response();
            r.headers_mut()
                .insert(VERSION_HEADER, HeaderValue::from(outcome.version));
            r
        }
        Ok(Err(SaveError::UnknownProblem(id))) => {
            error(StatusCode::NOT_FOUND, format!("no problem `{id}`"))
        }
        Ok(Err(SaveError::Invalid(violations))) => {
            let messages: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ "violations": violations, "messages": messages })),
            )
                .into_response()
        }
        Ok(Err(SaveError::Storage(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn export(State(store): State<Arc<AnnotationStore>>) -> Response {
    canonical(StatusCode::OK, to_canonical_json(&store.export()))
}

async fn stats(State(store): State<Arc<AnnotationStore>>, Query(q): Query<TauQuery>) -> Response {
    match store.stats(q.tau.unwrap_or(DEFAULT_TAU)) {
        Ok(doc) => Json(doc).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

pub fn router(store: Arc<AnnotationStore>) -> Router {
    Router::new()
        .route("/api/problems", get(list_problems))
        .route("/api/problems/{id}", get(get_problem))
        .route("/api/annotations", axum::routing::post(post_annotation))
        .route("/api/annotations/{id}", get(get_annotation))
        .route("/api/export", get(export))
        .route("/api/stats", get(stats))
        .with_state(store)
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn serve(
    store: Arc<AnnotationStore>,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ServiceError::PortInUse(addr.port())
        } else {
            ServiceError::Io(e)
        }
    })?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
