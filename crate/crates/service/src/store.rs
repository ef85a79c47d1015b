//! In-memory run registry backed by a state directory.
//!
//! Layout under the state directory:
//!
//! ```text
//! runs/<run-id>/meta.json          corpus name
//! runs/<run-id>/state.json         engine state (atomically replaced)
//! runs/<run-id>/annotations.jsonl  append-only annotation log
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use triage_core::api::{AnnotationRecord, JobStatus, RunSummary};
use triage_core::corpus::Corpus;
use triage_core::engine::{EngineError, RunState};

use crate::error::ApiError;

#[derive(Debug, Serialize, Deserialize)]
struct RunMeta {
    corpus: String,
}

pub struct RunEntry {
    pub id: String,
    pub corpus: String,
    dir: PathBuf,
    state: Mutex<RunState>,
    annotations: Mutex<Vec<AnnotationRecord>>,
    job: Mutex<JobStatus>,
    advancing: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl RunEntry {
    pub fn state(&self) -> MutexGuard<'_, RunState> {
        lock(&self.state)
    }

    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        lock(&self.annotations).clone()
    }

    pub fn job(&self) -> JobStatus {
        lock(&self.job).clone()
    }

    pub fn set_job(&self, job: JobStatus) {
        *lock(&self.job) = job;
    }

    pub fn is_advancing(&self) -> bool {
        self.advancing.load(Ordering::SeqCst)
    }

    /// Claims the advance slot; `false` if another advance holds it.
    pub fn try_begin_advance(&self) -> bool {
        self.advancing
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    pub fn end_advance(&self) {
        self.advancing.store(false, Ordering::SeqCst);
    }

    pub fn summary(&self) -> RunSummary {
        let state = self.state();
        RunSummary {
            run_id: self.id.clone(),
            corpus: self.corpus.clone(),
            phase: state.phase,
            t: state.t(),
            timesteps: state.config.timesteps,
            queue_pending: state.pending().len(),
            latest_metrics: state.trace.last().and_then(|r| r.metrics),
            depleted: state.depleted,
            job: self.job(),
        }
    }

    /// Writes `state` as the run's persisted state.
    pub fn persist(&self, state: &RunState) -> Result<(), ApiError> {
        state
            .save(&self.dir.join("state.json"))
            .map_err(|e| ApiError::internal(format!("persisting run {}: {e}", self.id)))
    }

    /// Appends to the annotation log, on disk first.
    pub fn append_annotation(&self, mut record: AnnotationRecord) -> Result<AnnotationRecord, ApiError> {
        let mut log = lock(&self.annotations);
        record.seq = log.len() as u64 + 1;
        let line = serde_json::to_string(&record).map_err(|e| ApiError::internal(e.to_string()))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("annotations.jsonl"))
            .and_then(|mut f| writeln!(f, "{line}").map(|_| f))
            .map_err(|e| ApiError::internal(format!("annotation log: {e}")))?;
        f.flush().map_err(|e| ApiError::internal(e.to_string()))?;
        log.push(record.clone());
        Ok(record)
    }
}

pub struct AppState {
    state_dir: PathBuf,
    corpora: HashMap<String, Arc<Corpus>>,
    runs: RwLock<HashMap<String, Arc<RunEntry>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("state directory {path} is not writable: {source}")]
    NotWritable { path: PathBuf, source: io::Error },
    #[error("failed to restore run {id}: {message}")]
    Restore { id: String, message: String },
}

fn check_writable(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"ok")?;
    fs::remove_file(&probe)
}

impl AppState {
    /// Opens (or creates) a state directory and restores any runs found in
    /// it. Fails if the directory cannot be written.
    pub fn open(state_dir: impl Into<PathBuf>, corpora: HashMap<String, Corpus>) -> Result<Self, StoreError> {
        let state_dir = state_dir.into();
        let runs_dir = state_dir.join("runs");
        check_writable(&runs_dir).map_err(|source| StoreError::NotWritable {
            path: state_dir.clone(),
            source,
        })?;
        let mut runs = HashMap::new();
        for entry in fs::read_dir(&runs_dir).map_err(|source| StoreError::NotWritable {
            path: runs_dir.clone(),
            source,
        })? {
            let Ok(entry) = entry else { continue };
            let dir = entry.path();
            if !dir.is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            match restore(&id, &dir) {
                Ok(run) => {
                    info!("restored run {id} at t={}", run.state().t());
                    runs.insert(id, Arc::new(run));
                }
                Err(message) => return Err(StoreError::Restore { id, message }),
            }
        }
        Ok(AppState {
            state_dir,
            corpora: corpora.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            runs: RwLock::new(runs),
        })
    }

    pub fn state_dir(&self) -> &Path {
        &self.state_dir
    }

    pub fn corpus(&self, name: &str) -> Option<Arc<Corpus>> {
        self.corpora.get(name).cloned()
    }

    pub fn corpus_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.corpora.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn run(&self, id: &str) -> Result<Arc<RunEntry>, ApiError> {
        self.runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown run `{id}`")))
    }

    pub fn runs(&self) -> Vec<Arc<RunEntry>> {
        let mut all: Vec<_> = self
            .runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }

    /// Persists and registers a freshly initialized run.
    pub fn insert(&self, id: String, corpus: String, state: RunState) -> Result<Arc<RunEntry>, ApiError> {
        let dir = self.state_dir.join("runs").join(&id);
        fs::create_dir_all(&dir).map_err(|e| ApiError::internal(format!("creating run dir: {e}")))?;
        let meta = serde_json::to_string(&RunMeta { corpus: corpus.clone() })
            .map_err(|e| ApiError::internal(e.to_string()))?;
        fs::write(dir.join("meta.json"), meta).map_err(|e| ApiError::internal(e.to_string()))?;
        let entry = Arc::new(RunEntry {
            id: id.clone(),
            corpus,
            dir,
            state: Mutex::new(state),
            annotations: Mutex::new(Vec::new()),
            job: Mutex::new(JobStatus::Idle),
            advancing: AtomicBool::new(false),
        });
        entry.persist(&entry.state())?;
        self.runs
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, entry.clone());
        Ok(entry)
    }
}

fn restore(id: &str, dir: &Path) -> Result<RunEntry, String> {
    let meta: RunMeta = serde_json::from_str(
        &fs::read_to_string(dir.join("meta.json")).map_err(|e| format!("meta.json: {e}"))?,
    )
    .map_err(|e| format!("meta.json: {e}"))?;
    let state = RunState::load(&dir.join("state.json")).map_err(|e: EngineError| e.to_string())?;
    let mut annotations = Vec::new();
    if let Ok(f) = fs::File::open(dir.join("annotations.jsonl")) {
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<AnnotationRecord>(&line) {
                Ok(r) => annotations.push(r),
                // a torn final line from a crash mid-append
                Err(e) => warn!("run {id}: skipping annotation line {}: {e}", i + 1),
            }
        }
    }
    Ok(RunEntry {
        id: id.to_string(),
        corpus: meta.corpus,
        dir: dir.to_path_buf(),
        state: Mutex::new(state),
        annotations: Mutex::new(annotations),
        job: Mutex::new(JobStatus::Idle),
        advancing: AtomicBool::new(false),
    })
}
