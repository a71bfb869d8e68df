//! HTTP facade under `/api/v1`.
//!
//! Long computations are jobs: `POST` returns a [`JobRecord`] with status 202,
//! clients poll `GET /jobs/{id}` and fetch `GET /jobs/{id}/result` once done.
//! Jobs run on one bounded rayon pool that sweeps also use for their cells.
//! Results live in memory in an LRU cache; an evicted result answers 410.
//! Identical requests (same kind and config fingerprint) reuse the existing job.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use firmnet::phase::SweepControl;
use firmnet::{parse_config, Error, PhaseDiagram, RunConfig, SimulationReport};
use lru::LruCache;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::commands::{self, NaiveReport};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_RESULT_CAP: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Simulate,
    Sweep,
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Fraction in `[0, 1]`; sweeps report cells completed over total.
    pub progress: f64,
    pub fingerprint: String,
    pub error: Option<String>,
    /// Path of the result resource once the job is done.
    pub result_ref: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum JobResult {
    Simulation(SimulationReport),
    Diagram(PhaseDiagram),
    Naive(NaiveReport),
}

impl JobResult {
    fn downsample(&self, stride: usize) -> JobResult {
        match self {
            JobResult::Simulation(r) => {
                JobResult::Simulation(SimulationReport { trajectory: r.trajectory.downsample(stride), ..r.clone() })
            }
            JobResult::Naive(r) => JobResult::Naive(r.downsample(stride)),
            JobResult::Diagram(d) => JobResult::Diagram(d.clone()),
        }
    }
}

struct Job {
    record: JobRecord,
    cancel: Arc<AtomicBool>,
}

struct Store {
    jobs: HashMap<String, Job>,
    results: LruCache<String, Arc<JobResult>>,
    by_fingerprint: HashMap<(JobKind, String), String>,
    next_id: u64,
}

impl Store {
    fn update(&mut self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(job) = self.jobs.get_mut(id) {
            // Terminal states are final; a cancelled job ignores late updates.
            if !matches!(job.record.status, JobStatus::Done | JobStatus::Failed) {
                f(&mut job.record);
            }
        }
    }

    /// Existing job for the same request that is live or still has its result.
    fn reusable(&self, kind: JobKind, fingerprint: &str) -> Option<JobRecord> {
        let id = self.by_fingerprint.get(&(kind, fingerprint.to_string()))?;
        let job = self.jobs.get(id)?;
        match job.record.status {
            JobStatus::Queued | JobStatus::Running => Some(job.record.clone()),
            JobStatus::Done if self.results.contains(id) => Some(job.record.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Worker threads of the shared pool; rayon's default when `None`.
    pub workers: Option<usize>,
    /// Results kept in memory before the least recently used is evicted.
    pub result_cap: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { workers: None, result_cap: DEFAULT_RESULT_CAP }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    pool: Arc<rayon::ThreadPool>,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig) -> std::io::Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new().thread_name(|i| format!("firmnet-worker-{i}"));
        if let Some(n) = cfg.workers {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| std::io::Error::other(e))?;
        let cap = NonZeroUsize::new(cfg.result_cap.max(1)).expect("positive cap");
        Ok(AppState {
            store: Arc::new(Mutex::new(Store {
                jobs: HashMap::new(),
                results: LruCache::new(cap),
                by_fingerprint: HashMap::new(),
                next_id: 1,
            })),
            pool: Arc::new(pool),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn submit(&self, kind: JobKind, cfg: RunConfig) -> JobRecord {
        let fingerprint = cfg.fingerprint();
        let mut store = self.lock();
        if let Some(rec) = store.reusable(kind, &fingerprint) {
            return rec;
        }
        let id = format!("job-{:06}", store.next_id);
        store.next_id += 1;
        let record = JobRecord {
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            progress: 0.0,
            fingerprint: fingerprint.clone(),
            error: None,
            result_ref: None,
        };
        let cancel = Arc::new(AtomicBool::new(false));
        store.jobs.insert(id.clone(), Job { record: record.clone(), cancel: cancel.clone() });
        store.by_fingerprint.insert((kind, fingerprint), id.clone());
        drop(store);

        let state = self.clone();
        self.pool.spawn(move || {
            if cancel.load(Ordering::Relaxed) {
                return;
            }
            state.lock().update(&id, |r| r.status = JobStatus::Running);
            let progress = |done: usize, total: usize| {
                state.lock().update(&id, |r| r.progress = done as f64 / total.max(1) as f64);
            };
            let outcome = match kind {
                JobKind::Simulate => commands::simulate(&cfg, cfg.run.seeds[0]).map(JobResult::Simulation),
                JobKind::Naive => commands::naive(&cfg, cfg.run.seeds[0]).map(JobResult::Naive),
                JobKind::Sweep => {
                    let ctl = SweepControl { cancel: Some(&cancel), progress: Some(&progress) };
                    commands::sweep(&cfg, &ctl).map(JobResult::Diagram)
                }
            };
            let mut store = state.lock();
            match outcome {
                Ok(result) => {
                    if !cancel.load(Ordering::Relaxed) {
                        store.results.put(id.clone(), Arc::new(result));
                    }
                    let result_ref = format!("/api/v1/jobs/{id}/result");
                    store.update(&id, |r| {
                        r.status = JobStatus::Done;
                        r.progress = 1.0;
                        r.result_ref = Some(result_ref);
                    });
                }
                Err(e) => store.update(&id, |r| {
                    r.status = JobStatus::Failed;
                    r.error = Some(e.to_string());
                }),
            }
        });
        record
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/simulate", post(post_simulate))
        .route("/api/v1/sweep", post(post_sweep))
        .route("/api/v1/naive", post(post_naive))
        .route("/api/v1/jobs/{id}", get(get_job).delete(delete_job))
        .route("/api/v1/jobs/{id}/result", get(get_result))
        .route("/api/v1/equilibrium", get(get_equilibrium))
        .route("/api/v1/spectrum", get(get_spectrum))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { path, message } => {
                ApiError(StatusCode::BAD_REQUEST, json!({"error": "invalid_config", "path": path, "message": message}))
            }
            Error::NotRealisable { eps } => ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "not_realisable", "eps": eps, "message": Error::NotRealisable { eps }.to_string()}),
            ),
            Error::InvalidParameter(_) | Error::InvalidEconomy(_) | Error::InvalidNetwork(_) | Error::NonPositiveProductivity { .. } => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({"error": "invalid_input", "message": e.to_string()}))
            }
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": other.to_string()})),
        }
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, json!({"error": "unknown_job", "id": id}))
}

fn body_config(body: &Bytes) -> Result<RunConfig, ApiError> {
    let text = std::str::from_utf8(body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, json!({"error": "invalid_config", "path": ".", "message": e.to_string()})))?;
    let text = if text.trim().is_empty() { "{}" } else { text };
    Ok(parse_config(text)?)
}

fn accepted(rec: JobRecord) -> Response {
    (StatusCode::ACCEPTED, Json(rec)).into_response()
}

async fn post_simulate(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = body_config(&body)?;
    let cfg = commands::for_seed(&cfg, cfg.run.seeds[0]);
    Ok(accepted(st.submit(JobKind::Simulate, cfg)))
}

async fn post_naive(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = body_config(&body)?;
    let cfg = commands::for_seed(&cfg, cfg.run.seeds[0]);
    Ok(accepted(st.submit(JobKind::Naive, cfg)))
}

async fn post_sweep(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = body_config(&body)?;
    if cfg.sweep.is_none() {
        return Err(Error::Config { path: "sweep".into(), message: "a sweep block is required".into() }.into());
    }
    Ok(accepted(st.submit(JobKind::Sweep, cfg)))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    let store = st.lock();
    store.jobs.get(&id).map(|j| Json(j.record.clone())).ok_or_else(|| not_found(&id))
}

/// Cancels a queued or running job; finished jobs are left untouched.
async fn delete_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    let mut store = st.lock();
    let job = store.jobs.get(&id).ok_or_else(|| not_found(&id))?;
    job.cancel.store(true, Ordering::Relaxed);
    store.update(&id, |r| {
        r.status = JobStatus::Failed;
        r.error = Some("cancelled".into());
    });
    Ok(Json(store.jobs[&id].record.clone()))
}

#[derive(Deserialize)]
struct StrideQuery {
    stride: Option<usize>,
}

async fn get_result(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<StrideQuery>) -> Result<Response, ApiError> {
    let result =
        {
            let mut store = st.lock();
            let rec = store.jobs.get(&id).ok_or_else(|| not_found(&id))?.record.clone();
            match rec.status {
                JobStatus::Done => store.results.get(&id).cloned().ok_or_else(|| {
                    ApiError(StatusCode::GONE, json!({"error": "result_evicted", "id": id, "fingerprint": rec.fingerprint}))
                })?,
                JobStatus::Failed => {
                    return Err(ApiError(StatusCode::CONFLICT, json!({"error": "job_failed", "id": id, "message": rec.error})))
                }
                _ => return Err(ApiError(StatusCode::CONFLICT, json!({"error": "not_ready", "id": id, "status": rec.status}))),
            }
        };
    let stride = q.stride.unwrap_or(1);
    if stride == 0 {
        return Err(ApiError(StatusCode::BAD_REQUEST, json!({"error": "invalid_query", "path": "stride", "message": "must be positive"})));
    }
    let body = if stride == 1 { Json(&*result).into_response() } else { Json(result.downsample(stride)).into_response() };
    Ok(body)
}

#[derive(Deserialize)]
struct ConfigQuery {
    config: Option<String>,
    seed: Option<u64>,
}

fn query_config(q: &ConfigQuery) -> Result<(RunConfig, u64), ApiError> {
    let cfg = parse_config(q.config.as_deref().unwrap_or("{}"))?;
    let seed = q.seed.unwrap_or(cfg.run.seeds[0]);
    Ok((cfg, seed))
}

/// Synchronous but CPU bound: runs on the worker pool without blocking the reactor.
async fn on_pool<T: Send + 'static>(st: &AppState, f: impl FnOnce() -> T + Send + 'static) -> T {
    let (tx, rx) = tokio::sync::oneshot::channel();
    st.pool.spawn(move || {
        let _ = tx.send(f());
    });
    rx.await.expect("worker dropped the reply")
}

async fn get_equilibrium(State(st): State<AppState>, Query(q): Query<ConfigQuery>) -> Result<Response, ApiError> {
    let (cfg, seed) = query_config(&q)?;
    let rep = on_pool(&st, move || commands::equilibrium(&cfg, seed)).await?;
    Ok(Json(rep).into_response())
}

async fn get_spectrum(State(st): State<AppState>, Query(q): Query<ConfigQuery>) -> Result<Response, ApiError> {
    let (cfg, seed) = query_config(&q)?;
    let rep = on_pool(&st, move || commands::spectrum(&cfg, seed)).await?;
    Ok(Json(rep).into_response())
}

/// Binds `listen` and serves until the process ends.
pub async fn serve(listen: &str, cfg: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(&cfg)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("firmnet service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
