//! Request and response bodies of the run service's HTTP/JSON interface,
//! shared by the server and its clients.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::engine::{Phase, RunConfig};
use crate::evalstats::Metrics;

pub const MAX_RATING: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRunRequest {
    /// Name of a corpus loaded by the service.
    pub corpus: String,
    pub config: RunConfig,
}

/// State of the background job that advances a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Idle,
    Running { target_t: usize },
    Completed { t: usize },
    Failed {
        target_t: usize,
        code: String,
        message: String,
        retryable: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub corpus: String,
    pub phase: Phase,
    /// Completed timesteps.
    pub t: usize,
    pub timesteps: usize,
    pub queue_pending: usize,
    pub latest_metrics: Option<Metrics>,
    pub depleted: bool,
    pub job: JobStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    pub title: String,
    pub body: String,
    pub uncertainty: f64,
    pub readability: Option<f64>,
    pub identifiability: f64,
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub run_id: String,
    pub phase: Phase,
    pub entries: Vec<QueueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub report_id: String,
    pub label: Label,
    /// 0 (most readable) to 4.
    #[serde(default)]
    pub readability_rating: Option<u8>,
    /// 0 (most identifiable) to 4.
    #[serde(default)]
    pub identifiability_rating: Option<u8>,
    #[serde(default)]
    pub elapsed_ms: Option<u64>,
    #[serde(default)]
    pub labeler: String,
}

impl LabelSubmission {
    /// Name of the first out-of-range rating field, if any.
    pub fn invalid_rating(&self) -> Option<&'static str> {
        if self.readability_rating.is_some_and(|r| r > MAX_RATING) {
            Some("readability_rating")
        } else if self.identifiability_rating.is_some_and(|r| r > MAX_RATING) {
            Some("identifiability_rating")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub report_id: String,
    pub queue_pending: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub report_id: String,
    pub label: Label,
    #[serde(default)]
    pub labeler: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvanceAccepted {
    pub run_id: String,
    pub job: JobStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Label,
    Correction,
}

/// One line of a run's append-only annotation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub seq: u64,
    /// Timestep the annotation belongs to (1-based).
    pub t: usize,
    pub kind: AnnotationKind,
    pub report_id: String,
    pub label: Label,
    pub readability_rating: Option<u8>,
    pub identifiability_rating: Option<u8>,
    pub elapsed_ms: Option<u64>,
    pub labeler: String,
}

pub const ANNOTATION_HEADER: &[&str] = &[
    "seq",
    "t",
    "kind",
    "report_id",
    "label",
    "readability_rating",
    "identifiability_rating",
    "elapsed_ms",
    "labeler",
];

pub fn annotations_csv(records: &[AnnotationRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(ANNOTATION_HEADER).expect("writing to memory");
    for r in records {
        w.serialize(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

/// Machine-readable error codes.
pub mod codes {
    pub const VALIDATION: &str = "validation";
    pub const NOT_FOUND: &str = "not_found";
    pub const CONFLICT: &str = "conflict";
    pub const PRECONDITION_FAILED: &str = "precondition_failed";
    pub const BACKEND_UNAVAILABLE: &str = "backend_unavailable";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
