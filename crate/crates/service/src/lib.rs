//! HTTP/JSON service for interactive labeling runs.
//!
//! Routes:
//!
//! | method | path                      | purpose                               |
//! |--------|---------------------------|---------------------------------------|
//! | GET    | `/corpora`                | names of the loaded corpora           |
//! | POST   | `/runs`                   | create a run                          |
//! | GET    | `/runs`                   | list run summaries                    |
//! | GET    | `/runs/{id}`              | run summary and advance job status    |
//! | GET    | `/runs/{id}/queue`        | reports still waiting for a label     |
//! | POST   | `/runs/{id}/labels`       | submit one label (with ratings)       |
//! | POST   | `/runs/{id}/corrections`  | override an earlier label             |
//! | POST   | `/runs/{id}/advance`      | start the next timestep (202 + job)   |
//! | GET    | `/runs/{id}/trace`        | JSON, or CSV with `Accept: text/csv`  |
//! | GET    | `/runs/{id}/annotations`  | annotation log as CSV                 |
//!
//! Every error body is `{"error": {"code", "message", "details"}}`.

mod error;
mod store;

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use tokio::net::TcpListener;
use triage_core::api::{
    annotations_csv, AdvanceAccepted, AnnotationKind, AnnotationRecord, CorrectionRequest,
    CreateRunRequest, JobStatus, LabelAck, LabelSubmission, QueueEntry, QueueResponse,
    RunSummary,
};
use triage_core::corpus::Corpus;
use triage_core::engine::{trace::trace_csv_string, LabelSource, RunState};

pub use error::ApiError;
pub use store::{AppState, RunEntry, StoreError};

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/corpora", get(list_corpora))
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/queue", get(get_queue))
        .route("/runs/{id}/labels", post(submit_label))
        .route("/runs/{id}/corrections", post(correct_label))
        .route("/runs/{id}/advance", post(advance))
        .route("/runs/{id}/trace", get(get_trace))
        .route("/runs/{id}/annotations", get(get_annotations))
        .with_state(state)
}

/// Serves until `shutdown` resolves. In-flight requests are drained and every
/// accepted mutation has already been written to the state directory.
pub async fn serve(
    listener: TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Loads the named corpora and opens the state directory.
pub fn open_state(
    state_dir: &std::path::Path,
    corpora: HashMap<String, Corpus>,
) -> Result<Shared, StoreError> {
    Ok(Arc::new(AppState::open(state_dir, corpora)?))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::validation("body", e.body_text()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn list_corpora(State(app): State<Shared>) -> Json<Vec<String>> {
    Json(app.corpus_names())
}

async fn create_run(
    State(app): State<Shared>,
    payload: Result<Json<CreateRunRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<RunSummary>), ApiError> {
    let req = body(payload)?;
    let corpus = app
        .corpus(&req.corpus)
        .ok_or_else(|| ApiError::validation("corpus", format!("unknown corpus `{}`", req.corpus)))?;
    req.config.validate()?;
    let app2 = app.clone();
    let summary = blocking(move || {
        let state = RunState::init((*corpus).clone(), req.config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let entry = app2.insert(id, req.corpus, state)?;
        info!("created run {}", entry.id);
        Ok(entry.summary())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_runs(State(app): State<Shared>) -> Json<Vec<RunSummary>> {
    Json(app.runs().iter().map(|r| r.summary()).collect())
}

async fn get_run(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<RunSummary>, ApiError> {
    Ok(Json(app.run(&id)?.summary()))
}

async fn get_queue(
    State(app): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<QueueResponse>, ApiError> {
    let run = app.run(&id)?;
    let state = run.state();
    let entries = state
        .pending()
        .into_iter()
        .map(|q| {
            let r = state.pools.corpus.get(&q.id);
            QueueEntry {
                id: q.id.clone(),
                title: r.map(|r| r.title.clone()).unwrap_or_default(),
                body: r.map(|r| r.body.clone()).unwrap_or_default(),
                uncertainty: q.scores.uncertainty_raw,
                readability: q.scores.readability_raw,
                identifiability: q.scores.identifiability_raw,
                aggregate: q.scores.aggregate,
            }
        })
        .collect();
    Ok(Json(QueueResponse {
        run_id: id,
        phase: state.phase,
        entries,
    }))
}

async fn submit_label(
    State(app): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<LabelSubmission>, JsonRejection>,
) -> Result<Json<LabelAck>, ApiError> {
    let sub = body(payload)?;
    if let Some(field) = sub.invalid_rating() {
        return Err(ApiError::validation(field, format!("{field} must be between 0 and 4")));
    }
    let run = app.run(&id)?;
    blocking(move || {
        let mut state = run.state();
        if run.is_advancing() {
            return Err(ApiError::conflict("an advance is in progress"));
        }
        let t = state.t() + 1;
        state.submit_label(&sub.report_id, sub.label)?;
        run.persist(&state)?;
        run.append_annotation(AnnotationRecord {
            seq: 0,
            t,
            kind: AnnotationKind::Label,
            report_id: sub.report_id.clone(),
            label: sub.label,
            readability_rating: sub.readability_rating,
            identifiability_rating: sub.identifiability_rating,
            elapsed_ms: sub.elapsed_ms,
            labeler: sub.labeler,
        })?;
        Ok(Json(LabelAck {
            report_id: sub.report_id,
            queue_pending: state.pending().len(),
            phase: state.phase,
        }))
    })
    .await
}

async fn correct_label(
    State(app): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<CorrectionRequest>, JsonRejection>,
) -> Result<Json<LabelAck>, ApiError> {
    let req = body(payload)?;
    let run = app.run(&id)?;
    blocking(move || {
        let mut state = run.state();
        if run.is_advancing() {
            return Err(ApiError::conflict("an advance is in progress"));
        }
        if state.pools.corpus.get(&req.report_id).is_none() {
            return Err(ApiError::not_found(format!("unknown report `{}`", req.report_id)));
        }
        let t = state.t() + 1;
        state.correct_label(&req.report_id, req.label)?;
        run.persist(&state)?;
        run.append_annotation(AnnotationRecord {
            seq: 0,
            t,
            kind: AnnotationKind::Correction,
            report_id: req.report_id.clone(),
            label: req.label,
            readability_rating: None,
            identifiability_rating: None,
            elapsed_ms: None,
            labeler: req.labeler,
        })?;
        Ok(Json(LabelAck {
            report_id: req.report_id,
            queue_pending: state.pending().len(),
            phase: state.phase,
        }))
    })
    .await
}

async fn advance(
    State(app): State<Shared>,
    Path(id): Path<String>,
) -> Result<(StatusCode, Json<AdvanceAccepted>), ApiError> {
    let run = app.run(&id)?;
    if !run.try_begin_advance() {
        return Err(ApiError::conflict("an advance is already in progress"));
    }
    let snapshot = {
        let state = run.state();
        let check = if state.is_finished() {
            Err(ApiError::precondition("run is finished"))
        } else if !state.pending().is_empty() {
            let pending = state.pending_ids();
            Err(ApiError::precondition(format!(
                "{} queued report(s) still need labels",
                pending.len()
            ))
            .with_details(serde_json::json!({ "pending": pending })))
        } else {
            Ok(state.clone())
        };
        match check {
            Ok(s) => s,
            Err(e) => {
                run.end_advance();
                return Err(e);
            }
        }
    };
    let target_t = snapshot.t() + 1;
    let job = JobStatus::Running { target_t };
    run.set_job(job.clone());

    let worker = run.clone();
    tokio::task::spawn_blocking(move || {
        let mut next = snapshot;
        let outcome = next
            .run_timestep(LabelSource::Submitted)
            .map(|_| ())
            .map_err(ApiError::from)
            .and_then(|_| worker.persist(&next));
        match outcome {
            Ok(()) => {
                *worker.state() = next;
                worker.set_job(JobStatus::Completed { t: target_t });
                info!("run {} advanced to t={target_t}", worker.id);
            }
            Err(e) => {
                error!("run {} advance failed: {}", worker.id, e.message);
                worker.set_job(JobStatus::Failed {
                    target_t,
                    code: e.code.to_string(),
                    retryable: e.status == StatusCode::SERVICE_UNAVAILABLE,
                    message: e.message,
                });
            }
        }
        worker.end_advance();
    });

    Ok((
        StatusCode::ACCEPTED,
        Json(AdvanceAccepted { run_id: id, job }),
    ))
}

fn wants_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/csv"))
}

fn csv_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], text).into_response()
}

async fn get_trace(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let run = app.run(&id)?;
    let trace = run.state().trace.clone();
    if wants_csv(&headers) {
        Ok(csv_response(trace_csv_string(&trace)))
    } else {
        Ok(Json(trace).into_response())
    }
}

async fn get_annotations(
    State(app): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let run = app.run(&id)?;
    Ok(csv_response(annotations_csv(&run.annotations())))
}
