//! Axum service exposing the pipeline over HTTP/JSON.
//!
//! Training runs are long, so they execute as jobs: `POST /jobs` returns an
//! id immediately, `GET /jobs/{id}` reports queue state and progress, and
//! `GET /jobs/{id}/report` returns the full outcome once done. Quick
//! operations (metric evaluation, synthetic data generation) are plain
//! synchronous endpoints.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rgrl_api::{
    ErrorBody, ErrorKind, EvalRequest, GenRequest, HealthResponse, JobProgress, JobState,
    JobStatus, JobSummary, SubmitJobRequest, SubmitJobResponse,
};
use rgrl_core::pipeline::{self, RunConfig, RunOutcome};
use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use tokio::sync::Semaphore;
use uuid::Uuid;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    jobs: RwLock<HashMap<Uuid, Job>>,
    workers: Semaphore,
}

struct Job {
    mode: rgrl_api::Mode,
    state: JobState,
    progress: Option<JobProgress>,
    error: Option<ErrorBody>,
    outcome: Option<RunOutcome>,
}

impl AppState {
    pub fn new(workers: usize) -> Self {
        AppState {
            inner: Arc::new(Inner {
                jobs: RwLock::new(HashMap::new()),
                workers: Semaphore::new(workers.max(1)),
            }),
        }
    }

    fn set_progress(&self, id: Uuid, phase: &str, done: usize, total: usize) {
        if let Some(job) = self.inner.jobs.write().unwrap().get_mut(&id) {
            job.progress = Some(JobProgress {
                phase: phase.to_string(),
                done,
                total,
            });
        }
    }

    fn set_state(&self, id: Uuid, state: JobState) {
        if let Some(job) = self.inner.jobs.write().unwrap().get_mut(&id) {
            job.state = state;
        }
    }

    fn finish(&self, id: Uuid, result: Result<RunOutcome, ErrorBody>) {
        if let Some(job) = self.inner.jobs.write().unwrap().get_mut(&id) {
            match result {
                Ok(outcome) => {
                    job.state = JobState::Done;
                    job.outcome = Some(outcome);
                }
                Err(error) => {
                    job.state = JobState::Failed;
                    job.error = Some(error);
                }
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/jobs", post(submit_job).get(list_jobs))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/report", get(job_report))
        .route("/eval", post(eval))
        .route("/gen", post(gen))
        .with_state(state)
}

/// Bind and serve on `addr` until the task is dropped or the process exits.
pub async fn serve(addr: SocketAddr, workers: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(workers))).await
}

/// Bind an ephemeral port and serve in a background task; used by the CLI
/// when no external server is configured, and by tests.
pub async fn spawn_ephemeral(
    workers: usize,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(AppState::new(workers))).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((addr, handle))
}

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

async fn submit_job(
    State(state): State<AppState>,
    Json(request): Json<SubmitJobRequest>,
) -> Response {
    let config = request.config;
    if let Err(e) = config.validate() {
        return error_response(&ErrorBody::from_core(&e));
    }
    let id = Uuid::new_v4();
    state.inner.jobs.write().unwrap().insert(
        id,
        Job {
            mode: config.mode,
            state: JobState::Queued,
            progress: None,
            error: None,
            outcome: None,
        },
    );
    tokio::spawn(run_job(state.clone(), id, config));
    (StatusCode::ACCEPTED, Json(SubmitJobResponse { id })).into_response()
}

async fn run_job(state: AppState, id: Uuid, config: RunConfig) {
    let _permit = state
        .inner
        .workers
        .acquire()
        .await
        .expect("worker semaphore closed");
    state.set_state(id, JobState::Running);
    tracing::info!(%id, "job started");

    let progress_state = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let on_progress = move |phase: &str, done: usize, total: usize| {
            progress_state.set_progress(id, phase, done, total);
        };
        pipeline::execute(&config, Some(&on_progress))
    })
    .await;

    let result = match result {
        Ok(Ok(outcome)) => Ok(outcome),
        Ok(Err(e)) => Err(ErrorBody::from_core(&e)),
        Err(join_err) => Err(ErrorBody {
            kind: ErrorKind::Numerical,
            message: format!("job panicked: {join_err}"),
        }),
    };
    match &result {
        Ok(_) => tracing::info!(%id, "job done"),
        Err(e) => tracing::warn!(%id, "job failed: {}", e.message),
    }
    state.finish(id, result);
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobSummary>> {
    let jobs = state.inner.jobs.read().unwrap();
    let mut out: Vec<JobSummary> = jobs
        .iter()
        .map(|(&id, job)| JobSummary {
            id,
            state: job.state,
            mode: job.mode,
        })
        .collect();
    out.sort_by_key(|j| j.id);
    Json(out)
}

async fn job_status(State(state): State<AppState>, Path(id): Path<Uuid>) -> Response {
    let jobs = state.inner.jobs.read().unwrap();
    match jobs.get(&id) {
        Some(job) => Json(JobStatus {
            id,
            state: job.state,
            mode: job.mode,
            progress: job.progress.clone(),
            error: job.error.clone(),
        })
        .into_response(),
        None => not_found(id),
    }
}

async fn job_report(State(state): State<AppState>, Path(id): Path<Uuid>) -> Response {
    let jobs = state.inner.jobs.read().unwrap();
    match jobs.get(&id) {
        Some(job) => match (&job.outcome, &job.error) {
            (Some(outcome), _) => Json(outcome).into_response(),
            (None, Some(error)) => error_response(error),
            (None, None) => (
                StatusCode::CONFLICT,
                Json(ErrorBody {
                    kind: ErrorKind::Config,
                    message: format!("job {id} has not finished"),
                }),
            )
                .into_response(),
        },
        None => not_found(id),
    }
}

async fn eval(Json(request): Json<EvalRequest>) -> Response {
    match rgrl_core::metrics::evaluate(&request.y_true, &request.y_pred) {
        Ok(report) => Json(report).into_response(),
        Err(e) => error_response(&ErrorBody::from_core(&e)),
    }
}

async fn gen(Json(request): Json<GenRequest>) -> Response {
    let result = tokio::task::spawn_blocking(move || {
        pipeline::generate_and_write(&request.spec, request.seed, &request.out_dir)
    })
    .await;
    match result {
        Ok(Ok(output)) => Json(output).into_response(),
        Ok(Err(e)) => error_response(&ErrorBody::from_core(&e)),
        Err(join_err) => error_response(&ErrorBody {
            kind: ErrorKind::Numerical,
            message: format!("generation panicked: {join_err}"),
        }),
    }
}

fn not_found(id: Uuid) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(ErrorBody {
            kind: ErrorKind::Config,
            message: format!("no job {id}"),
        }),
    )
        .into_response()
}

fn error_response(error: &ErrorBody) -> Response {
    let status = match error.kind {
        ErrorKind::Config => StatusCode::BAD_REQUEST,
        ErrorKind::Numerical => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorKind::Io => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(error.clone())).into_response()
}
