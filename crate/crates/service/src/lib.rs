//! HTTP JSON API over the modulus engine.
//!
//! Single solves are synchronous; sweeps run as background jobs that are
//! polled by id. Solutions and jobs live in memory and expire after a TTL.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qmod_core::experiments::{
    run_sweep, Experiment, SweepGrid, SweepParams, SweepResult, SweepSummary,
};
use qmod_core::geometry::validate_polygon;
use qmod_core::modulus::{solve_quad, solve_ring, Solved};
use qmod_core::{
    AdaptiveOptions, GeometryError, ModulusError, Point, Quadrilateral, RingCondenser,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

/// Budget for synchronous solves, small enough to answer within seconds.
pub const INTERACTIVE_TOL: f64 = 1e-4;
pub const INTERACTIVE_MAX_DOFS: usize = 50_000;
/// Upper limit a request may ask for.
pub const MAX_REQUEST_DOFS: usize = 200_000;
pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone)]
pub struct Config {
    pub ttl: Duration,
    /// Concurrent solver tasks (synchronous solves plus sweep jobs).
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        let workers = std::thread::available_parallelism().map_or(2, |n| n.get());
        Self {
            ttl: DEFAULT_TTL,
            workers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Sweep,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// Fraction of grid points finished, in `[0, 1]`.
    pub progress: f64,
    pub request: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SweepResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SweepSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    touched: Instant,
}

impl Job {
    /// Moves to `next` if that is a legal transition.
    fn advance(&mut self, next: JobState) -> bool {
        let ok = matches!(
            (self.state, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
                | (JobState::Queued, JobState::Failed)
        );
        if ok {
            self.state = next;
            self.touched = Instant::now();
        }
        ok
    }
}

struct StoredSolution {
    body: Value,
    touched: Instant,
}

#[derive(Default)]
struct Store {
    jobs: HashMap<String, Job>,
    solutions: HashMap<String, StoredSolution>,
}

impl Store {
    fn evict(&mut self, ttl: Duration) {
        let now = Instant::now();
        self.jobs.retain(|_, j| {
            matches!(j.state, JobState::Queued | JobState::Running) || now - j.touched < ttl
        });
        self.solutions.retain(|_, s| now - s.touched < ttl);
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    workers: Arc<Semaphore>,
    config: Config,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        Self {
            store: Arc::default(),
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            config,
        }
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Drops finished jobs and solutions older than the TTL.
    pub fn evict_expired(&self) {
        let ttl = self.config.ttl;
        self.store().evict(ttl);
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.store().jobs.get_mut(id) {
            f(job);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/quad", post(post_quad))
        .route("/api/ring", post(post_ring))
        .route("/api/sweeps", post(post_sweep))
        .route("/api/sweeps/{id}", get(get_sweep))
        .route("/api/solution/{id}", get(get_solution))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Error response `{"error": message, "reason": code}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    reason: &'static str,
}

impl ApiError {
    fn bad_request(message: impl Into<String>, reason: &'static str) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            reason,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: format!("no {what} with id '{id}'"),
            reason: "not-found",
        }
    }
}

impl From<ModulusError> for ApiError {
    fn from(e: ModulusError) -> Self {
        let status = if e.is_input_error() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        Self {
            status,
            message: e.to_string(),
            reason: e.reason(),
        }
    }
}

impl From<GeometryError> for ApiError {
    fn from(e: GeometryError) -> Self {
        ModulusError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.message, "reason": self.reason })),
        )
            .into_response()
    }
}

/// Parses a body ourselves so malformed JSON also yields `{error, reason}`.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string(), "invalid-json"))
}

#[derive(Debug, Deserialize)]
struct SolveOptions {
    tol: Option<f64>,
    max_dofs: Option<usize>,
}

impl SolveOptions {
    fn resolve(&self) -> Result<AdaptiveOptions, ApiError> {
        let max_dofs = self.max_dofs.unwrap_or(INTERACTIVE_MAX_DOFS);
        if max_dofs > MAX_REQUEST_DOFS {
            return Err(ApiError::bad_request(
                format!("max_dofs may not exceed {MAX_REQUEST_DOFS}"),
                "bad-options",
            ));
        }
        let opts = AdaptiveOptions::new(self.tol.unwrap_or(INTERACTIVE_TOL), max_dofs);
        opts.validate()?;
        Ok(opts)
    }
}

/// Quadrilateral JSON plus optional solver options. `marked` defaults to
/// `[0, 1, 2, 3]` for four vertices.
#[derive(Debug, Deserialize)]
struct QuadRequest {
    vertices: Vec<Point>,
    marked: Option<[usize; 4]>,
    #[serde(flatten)]
    options: SolveOptions,
}

#[derive(Debug, Deserialize)]
struct PolygonBody {
    vertices: Vec<Point>,
}

#[derive(Debug, Deserialize)]
struct RingRequest {
    outer: PolygonBody,
    inner: PolygonBody,
    #[serde(flatten)]
    options: SolveOptions,
}

/// Runs `f` on the blocking pool once a worker slot is free.
async fn on_worker<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    let _permit = state
        .workers
        .acquire()
        .await
        .expect("semaphore is never closed");
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("solver task failed: {e}"),
        reason: "internal",
    })
}

fn store_solution<R>(state: &AppState, solved: &Solved<R>) -> String {
    let id = Uuid::new_v4().to_string();
    let body = serde_json::to_value(solved.export()).expect("mesh serializes");
    state.store().solutions.insert(
        id.clone(),
        StoredSolution {
            body,
            touched: Instant::now(),
        },
    );
    id
}

/// 200 when converged, 422 with the bracket when the budget ran out.
fn solve_response<R: Serialize>(result: &R, converged: bool, solution_id: String) -> Response {
    let mut body = serde_json::to_value(result).expect("result serializes");
    body["solution_id"] = Value::String(solution_id);
    let status = if converged {
        StatusCode::OK
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    };
    (status, Json(body)).into_response()
}

async fn post_quad(
    State(state): State<AppState>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    state.evict_expired();
    let req: QuadRequest = parse_body(&body)?;
    let opts = req.options.resolve()?;
    let marked = match req.marked {
        Some(m) => m,
        None if req.vertices.len() == 4 => [0, 1, 2, 3],
        None => {
            return Err(ApiError::bad_request(
                "'marked' is required unless there are exactly 4 vertices",
                "bad-marking",
            ))
        }
    };
    let quad = Quadrilateral::new(req.vertices, marked)?;
    let solved = on_worker(&state, move || solve_quad(&quad, &opts)).await??;
    let id = store_solution(&state, &solved);
    Ok(solve_response(&solved.result, solved.result.converged, id))
}

async fn post_ring(
    State(state): State<AppState>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    state.evict_expired();
    let req: RingRequest = parse_body(&body)?;
    let opts = req.options.resolve()?;
    let ring = RingCondenser::new(
        validate_polygon(req.outer.vertices)?,
        validate_polygon(req.inner.vertices)?,
    )?;
    let solved = on_worker(&state, move || solve_ring(&ring, &opts)).await??;
    let id = store_solution(&state, &solved);
    Ok(solve_response(&solved.result, solved.result.converged, id))
}

#[derive(Debug, Deserialize, Serialize)]
struct SweepRequest {
    experiment: String,
    /// Either `"xmin:xmax:nx,ymin:ymax:ny"` or a grid object.
    grid: Option<Value>,
    alpha: Option<f64>,
    beta: Option<f64>,
    tol: Option<f64>,
    max_dofs: Option<usize>,
}

impl SweepRequest {
    fn resolve(&self) -> Result<(Experiment, SweepGrid, SweepParams), ApiError> {
        let experiment: Experiment =
            self.experiment
                .parse()
                .map_err(|e: qmod_core::experiments::UnknownExperiment| {
                    ApiError::bad_request(e.to_string(), "unknown-experiment")
                })?;
        let bad_grid = |m: String| ApiError::bad_request(m, "bad-grid");
        let grid = match &self.grid {
            None => experiment.default_grid(),
            Some(Value::String(s)) => s
                .parse()
                .map_err(|e: qmod_core::experiments::GridError| bad_grid(e.to_string()))?,
            Some(v) => {
                let g: SweepGrid =
                    serde_json::from_value(v.clone()).map_err(|e| bad_grid(e.to_string()))?;
                g.validate().map_err(|e| bad_grid(e.to_string()))?;
                g
            }
        };
        let mut params = SweepParams::defaults(experiment);
        params.alpha = self.alpha.unwrap_or(params.alpha);
        params.beta = self.beta.unwrap_or(params.beta);
        params.opts = SolveOptions {
            tol: Some(self.tol.unwrap_or(params.opts.tol)),
            max_dofs: Some(self.max_dofs.unwrap_or(params.opts.max_dofs)),
        }
        .resolve()?;
        Ok((experiment, grid, params))
    }
}

async fn post_sweep(
    State(state): State<AppState>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    state.evict_expired();
    let req: SweepRequest = parse_body(&body)?;
    let (experiment, grid, params) = req.resolve()?;
    let id = Uuid::new_v4().to_string();
    let job = Job {
        id: id.clone(),
        kind: JobKind::Sweep,
        state: JobState::Queued,
        progress: 0.0,
        request: serde_json::to_value(&req).expect("request serializes"),
        result: None,
        summary: None,
        error: None,
        touched: Instant::now(),
    };
    state.store().jobs.insert(id.clone(), job);

    let worker_state = state.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let st = worker_state.clone();
        let jid = job_id.clone();
        let outcome = on_worker(&worker_state, move || {
            st.update_job(&jid, |j| {
                j.advance(JobState::Running);
            });
            let progress_state = st.clone();
            let progress_id = jid.clone();
            run_sweep(experiment, &grid, &params, &move |done, total| {
                progress_state.update_job(&progress_id, |j| {
                    j.progress = done as f64 / total as f64;
                    j.touched = Instant::now();
                });
            })
        })
        .await;
        worker_state.update_job(&job_id, |j| match outcome {
            Ok(Ok(result)) => {
                if j.state == JobState::Queued {
                    j.advance(JobState::Running);
                }
                j.progress = 1.0;
                j.summary = Some(result.summary());
                j.result = Some(result);
                j.advance(JobState::Done);
            }
            Ok(Err(e)) => {
                j.error = Some(e.to_string());
                j.advance(JobState::Failed);
            }
            Err(e) => {
                j.error = Some(e.message);
                j.advance(JobState::Failed);
            }
        });
    });

    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "id": id, "state": JobState::Queued })),
    )
        .into_response())
}

async fn get_sweep(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Job>, ApiError> {
    state.evict_expired();
    state
        .store()
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("sweep job", &id))
}

async fn get_solution(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    state.evict_expired();
    let mut store = state.store();
    let sol = store
        .solutions
        .get_mut(&id)
        .ok_or_else(|| ApiError::not_found("solution", &id))?;
    sol.touched = Instant::now();
    Ok(Json(sol.body.clone()))
}
