//! The active-learning loop.
//!
//! A run alternates between two phases. After sampling, the queried reports
//! wait for labels (from the oracle in simulation, from people in interactive
//! use). Advancing a timestep then:
//!
//! 1. updates the model on every labeled report (the intermediate model),
//! 2. pseudo-labels the nearest unlabeled neighbors of this step's queries,
//! 3. updates the model again including the pseudo labels,
//! 4. evaluates on the held-out test set and appends a [`TimestepRecord`],
//! 5. samples the next query unless the run is finished or the pool is empty.
//!
//! All of this happens on a copy of the state that replaces the original only
//! on success, so a failed step (for example an unreachable remote backend)
//! leaves the run exactly as it was.

pub mod trace;

use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use fnv::FnvHasher;
use log::info;
use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trace::{TimestepRecord, TraceRow};

use crate::corpus::{init_partition, Corpus, CorpusError, Label, LabelState, Pools, TestSelection};
use crate::evalstats::{self, ConfusionMatrix, Metrics, StatsError};
use crate::model::{
    Backend, BuiltinBackend, BuiltinParams, ModelBackend, ModelError, Provenance, RemoteBackend,
    TrainingExample, UpdateMode,
};
use crate::pseudolabel::{pseudo_label_batch, PseudoError};
use crate::sampling::{self, NormalizationBounds, SamplingError, ScoreComponents, Strategy};
use crate::textmetrics::TermLists;

pub const STATE_FORMAT_TAG: &str = "triage-run";
pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("corpus has {available} reports, need at least {needed} (test set + initial labels + one query)")]
    CorpusTooSmall { needed: usize, available: usize },
    #[error("report `{0}` has no oracle label")]
    MissingOracle(String),
    #[error("{} queried report(s) still need labels", .0.len())]
    PendingLabels(Vec<String>),
    #[error("run is finished")]
    Finished,
    #[error("report `{0}` is not in the current query")]
    NotInQueue(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("state file version mismatch: {0}")]
    Version(String),
    #[error("state file is corrupted: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl EngineError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EngineError::Model(e) => e.is_retryable(),
            EngineError::Pseudo(PseudoError::Model(e)) => e.is_retryable(),
            EngineError::Sampling(SamplingError::Model(e)) => e.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Builtin,
    Remote { endpoint: String, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum StartMode {
    /// Train from scratch on a seeded random initial labeled set. `None`
    /// means "same size as the query".
    Cold { initial_labels: Option<usize> },
    /// Start from a pre-trained model. The built-in backend has no
    /// pre-training, so it is bootstrapped on a seeded set of `k` reports.
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Reports queried per timestep.
    pub k: usize,
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    /// Pseudo labels per human label.
    #[serde(default = "default_pseudo_s")]
    pub pseudo_s: usize,
    pub strategy: Strategy,
    #[serde(default = "default_backend")]
    pub backend: BackendConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: StartMode,
    #[serde(default)]
    pub test_size: usize,
    /// Explicit test ids; overrides `test_size` when present.
    #[serde(default)]
    pub test_ids: Option<Vec<String>>,
    #[serde(default = "default_split")]
    pub train_val_split: f64,
    /// Store wall-clock durations in the trace. Off for reproducible traces.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub term_lists: TermLists,
}

fn default_timesteps() -> usize {
    10
}

fn default_pseudo_s() -> usize {
    1
}

fn default_backend() -> BackendConfig {
    BackendConfig::Builtin
}

fn default_start() -> StartMode {
    StartMode::Cold {
        initial_labels: None,
    }
}

fn default_split() -> f64 {
    0.8
}

impl RunConfig {
    pub fn new(k: usize, strategy: Strategy, seed: u64) -> Self {
        RunConfig {
            k,
            timesteps: default_timesteps(),
            pseudo_s: default_pseudo_s(),
            strategy,
            backend: default_backend(),
            seed,
            start: default_start(),
            test_size: 0,
            test_ids: None,
            train_val_split: default_split(),
            record_timing: false,
            term_lists: TermLists::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |field, message: &str| {
            Err(EngineError::Config {
                field,
                message: message.to_string(),
            })
        };
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.timesteps == 0 {
            return bad("timesteps", "must be at least 1");
        }
        if !(self.train_val_split > 0.0 && self.train_val_split < 1.0) {
            return bad("train_val_split", "must be strictly between 0 and 1");
        }
        if let StartMode::Cold {
            initial_labels: Some(0),
        } = self.start
        {
            return bad("start.initial_labels", "must be at least 1");
        }
        if let BackendConfig::Remote { endpoint, dim } = &self.backend {
            if endpoint.is_empty() {
                return bad("backend.endpoint", "must not be empty");
            }
            if *dim == 0 {
                return bad("backend.dim", "must be at least 1");
            }
        }
        Ok(())
    }

    fn initial_label_count(&self) -> usize {
        match (self.start, &self.backend) {
            (StartMode::Cold { initial_labels }, _) => initial_labels.unwrap_or(self.k),
            (StartMode::Warm, BackendConfig::Builtin) => self.k,
            (StartMode::Warm, BackendConfig::Remote { .. }) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SamplingDoneAwaitingLabels,
    ReadyToAdvance,
    Finished,
}

/// A queried report and the scores it was selected with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedReport {
    pub id: String,
    pub scores: ScoreComponents,
}

/// Where the labels for the current query come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Copy each report's oracle label (simulation).
    Oracle,
    /// Labels were already submitted one by one; refuse if any are missing.
    Submitted,
}

/// Checkpoints inside a timestep, reported to observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPhase {
    Labeled,
    IntermediateUpdate,
    PseudoLabeled,
    FinalUpdate,
    Evaluated,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    pub pools: Pools,
    pub backend: Backend,
    pub bounds: NormalizationBounds,
    pub trace: Vec<TimestepRecord>,
    pub phase: Phase,
    /// Reports selected by the latest sampling pass, in queue order.
    pub current_query: Vec<QueuedReport>,
    /// Size of the unlabeled pool just before the latest sampling pass.
    pub du_before_query: usize,
    /// The unlabeled pool ran out before `timesteps` were completed.
    pub depleted: bool,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    state: RunState,
}

/// Derives an independent seed for one purpose (and timestep) of a run.
pub fn derive_seed(seed: u64, purpose: &str, t: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write(purpose.as_bytes());
    h.write_u64(t as u64);
    h.finish()
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        (
            Some(evalstats::mean(values)),
            Some(evalstats::std_dev(values)),
        )
    }
}

/// Confusion matrix and metrics of `backend` on the given reports, using their
/// oracle labels as ground truth.
pub fn evaluate<B: ModelBackend + ?Sized>(
    backend: &B,
    corpus: &Corpus,
    test_ids: &[&str],
) -> Result<(ConfusionMatrix, Metrics), EngineError> {
    if test_ids.is_empty() {
        return Err(EngineError::EmptyTestSet);
    }
    let mut texts = Vec::with_capacity(test_ids.len());
    let mut truth = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let r = corpus.require(id)?;
        texts.push(r.model_text.as_str());
        truth.push(
            r.oracle_label
                .ok_or_else(|| EngineError::MissingOracle(id.to_string()))?,
        );
    }
    let preds = backend.predict(&texts)?;
    let cm = ConfusionMatrix::from_pairs(preds.iter().map(|p| p.label()).zip(truth));
    Ok((cm, evalstats::metrics(&cm)?))
}

impl RunState {
    /// Partitions the corpus, trains the initial model, and samples the first
    /// query.
    pub fn init(corpus: Corpus, config: RunConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let selection = match &config.test_ids {
            Some(ids) => TestSelection::Ids(ids.clone()),
            None => TestSelection::Size(config.test_size),
        };
        let test_count = match &selection {
            TestSelection::Size(n) => *n,
            TestSelection::Ids(ids) => ids.len(),
        };
        let initial = config.initial_label_count();
        let needed = test_count + initial + config.k;
        if corpus.len() < needed {
            return Err(EngineError::CorpusTooSmall {
                needed,
                available: corpus.len(),
            });
        }
        let partition = init_partition(&corpus, &selection, derive_seed(config.seed, "test", 0), true)?;
        let mut pools = Pools::new(corpus, partition);

        let mut backend = match &config.backend {
            BackendConfig::Builtin => Backend::Builtin(BuiltinBackend::with_params(
                derive_seed(config.seed, "backend", 0),
                BuiltinParams {
                    train_fraction: config.train_val_split,
                    ..BuiltinParams::default()
                },
            )),
            BackendConfig::Remote { endpoint, dim } => {
                Backend::Remote(RemoteBackend::new(endpoint.clone(), *dim))
            }
        };

        if initial > 0 {
            let candidates: Vec<String> = pools
                .partition
                .unlabeled
                .iter()
                .filter(|id| pools.corpus.get(id).is_some_and(|r| r.oracle_label.is_some()))
                .cloned()
                .collect();
            if candidates.len() < initial {
                return Err(EngineError::Config {
                    field: "start",
                    message: format!(
                        "need {initial} oracle-labeled reports for the initial set, found {}",
                        candidates.len()
                    ),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "initial", 0));
            let mut picked: Vec<&String> = index::sample(&mut rng, candidates.len(), initial)
                .into_iter()
                .map(|i| &candidates[i])
                .collect();
            picked.sort();
            for id in picked {
                let label = pools.report(id)?.oracle_label.expect("filtered above");
                pools.label_initial(id, label)?;
            }
            backend.update(&training_examples(&pools), UpdateMode::Cold)?;
        }

        let mut state = RunState {
            du_before_query: pools.partition.unlabeled.len(),
            config,
            pools,
            backend,
            bounds: NormalizationBounds::default(),
            trace: Vec::new(),
            phase: Phase::SamplingDoneAwaitingLabels,
            current_query: Vec::new(),
            depleted: false,
        };
        state.sample_next()?;
        info!(
            "initialized run: {} labeled, {} unlabeled, {} queried, {} test",
            state.pools.partition.labeled.len(),
            state.pools.partition.unlabeled.len(),
            state.pools.partition.queried.len(),
            state.pools.partition.test.len()
        );
        Ok(state)
    }

    /// Timesteps completed so far.
    pub fn t(&self) -> usize {
        self.trace.len()
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Queried reports still waiting for a label, in queue order.
    pub fn pending(&self) -> Vec<&QueuedReport> {
        self.current_query
            .iter()
            .filter(|q| self.pools.partition.queried.contains(&q.id))
            .collect()
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.pending().into_iter().map(|q| q.id.clone()).collect()
    }

    /// Records a human label for a report in the current query.
    pub fn submit_label(&mut self, id: &str, label: Label) -> Result<(), EngineError> {
        if self.is_finished() {
            return Err(EngineError::Finished);
        }
        if !self.current_query.iter().any(|q| q.id == id) {
            return Err(EngineError::NotInQueue(id.to_string()));
        }
        self.pools.apply_human_label(id, label)?;
        if self.pools.partition.queried.is_empty() {
            self.phase = Phase::ReadyToAdvance;
        }
        Ok(())
    }

    /// Overrides the label of an already-labeled report. The next model
    /// update trains on the corrected label.
    pub fn correct_label(&mut self, id: &str, label: Label) -> Result<(), EngineError> {
        self.pools.correct_label(id, label)?;
        Ok(())
    }

    pub fn run_timestep(&mut self, source: LabelSource) -> Result<&TimestepRecord, EngineError> {
        self.run_timestep_observed(source, &mut |_, _| {})
    }

    /// Like [`run_timestep`](Self::run_timestep), calling `observer` after
    /// each internal phase with the working state.
    pub fn run_timestep_observed(
        &mut self,
        source: LabelSource,
        observer: &mut dyn FnMut(StepPhase, &RunState),
    ) -> Result<&TimestepRecord, EngineError> {
        if self.is_finished() {
            return Err(EngineError::Finished);
        }
        let mut next = self.clone();
        next.step(source, observer)?;
        *self = next;
        Ok(self.trace.last().expect("step appends a record"))
    }

    fn step(
        &mut self,
        source: LabelSource,
        observer: &mut dyn FnMut(StepPhase, &RunState),
    ) -> Result<(), EngineError> {
        let started = Instant::now();
        let pending = self.pending_ids();
        match source {
            LabelSource::Submitted if !pending.is_empty() => {
                return Err(EngineError::PendingLabels(pending))
            }
            LabelSource::Submitted => {}
            LabelSource::Oracle => {
                for id in &pending {
                    let label = self
                        .pools
                        .report(id)?
                        .oracle_label
                        .ok_or_else(|| EngineError::MissingOracle(id.clone()))?;
                    self.pools.apply_human_label(id, label)?;
                }
            }
        }
        observer(StepPhase::Labeled, self);

        let query_ids: Vec<String> = self.current_query.iter().map(|q| q.id.clone()).collect();
        self.backend
            .update(&training_examples(&self.pools), UpdateMode::Warm)?;
        observer(StepPhase::IntermediateUpdate, self);

        let assignments =
            pseudo_label_batch(&query_ids, &mut self.pools, &self.backend, self.config.pseudo_s)?;
        observer(StepPhase::PseudoLabeled, self);

        if !assignments.is_empty() {
            self.backend
                .update(&training_examples(&self.pools), UpdateMode::Warm)?;
        }
        observer(StepPhase::FinalUpdate, self);

        let test_ids: Vec<&str> = self.pools.partition.test.iter().map(String::as_str).collect();
        let (confusion, metrics) = if test_ids.is_empty() {
            (None, None)
        } else {
            let (cm, m) = evaluate(&self.backend, &self.pools.corpus, &test_ids)?;
            (Some(cm), Some(m))
        };
        observer(StepPhase::Evaluated, self);

        let readability: Vec<f64> = self
            .current_query
            .iter()
            .filter_map(|q| q.scores.readability_raw)
            .collect();
        let identifiability: Vec<f64> = self
            .current_query
            .iter()
            .map(|q| q.scores.identifiability_raw)
            .collect();
        let (mean_readability, sd_readability) = mean_sd(&readability);
        let (mean_identifiability, sd_identifiability) = mean_sd(&identifiability);
        let t = self.trace.len() + 1;
        let record = TimestepRecord {
            t,
            strategy: self.config.strategy,
            k: self.config.k,
            s: self.config.pseudo_s,
            seed: self.config.seed,
            queried_ids: query_ids,
            mean_readability,
            sd_readability,
            mean_identifiability,
            sd_identifiability,
            pseudo_count: assignments.len(),
            pseudo_assignments: assignments,
            metrics,
            confusion,
            du_size: self.pools.partition.unlabeled.len(),
            dl_size: self.pools.partition.labeled.len(),
            duration_ms: 0,
        };
        info!(
            "t={t} queried={} pseudo={} f1={:?} |D_u|={}",
            record.queried_ids.len(),
            record.pseudo_count,
            record.metrics.map(|m| m.f1),
            record.du_size
        );
        self.trace.push(record);
        self.current_query.clear();

        if t >= self.config.timesteps {
            self.phase = Phase::Finished;
        } else {
            self.sample_next()?;
        }
        observer(StepPhase::Sampled, self);
        if self.config.record_timing {
            let last = self.trace.last_mut().expect("pushed above");
            last.duration_ms = started.elapsed().as_millis() as u64;
        }
        Ok(())
    }

    /// Scores the unlabeled pool and moves the next query into the queried
    /// set. An empty pool finishes the run.
    fn sample_next(&mut self) -> Result<(), EngineError> {
        self.du_before_query = self.pools.partition.unlabeled.len();
        if self.pools.partition.unlabeled.is_empty() {
            self.depleted = true;
            self.phase = Phase::Finished;
            return Ok(());
        }
        let pool: Vec<&crate::corpus::Report> = self
            .pools
            .partition
            .unlabeled
            .iter()
            .map(|id| self.pools.corpus.require(id))
            .collect::<Result<_, _>>()?;
        let scored = sampling::score_reports(
            &pool,
            &self.backend,
            &mut self.bounds,
            &self.config.term_lists,
        )?;
        let t = self.trace.len() + 1;
        let selection = sampling::select_top_k(
            &scored,
            self.config.k,
            self.config.strategy,
            derive_seed(self.config.seed, "query", t),
        )?;
        if selection.depleted {
            self.depleted = true;
        }
        let mut queue: Vec<QueuedReport> = scored
            .into_iter()
            .filter(|s| selection.ids.contains(&s.id))
            .map(|s| QueuedReport {
                id: s.id.clone(),
                scores: s,
            })
            .collect();
        queue.sort_by(|a, b| {
            b.scores
                .aggregate
                .total_cmp(&a.scores.aggregate)
                .then_with(|| a.id.cmp(&b.id))
        });
        self.pools
            .mark_queried(queue.iter().map(|q| q.id.as_str()))?;
        self.current_query = queue;
        self.phase = Phase::SamplingDoneAwaitingLabels;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, EngineError> {
        let file = StateFile {
            format: STATE_FORMAT_TAG.to_string(),
            version: STATE_FORMAT_VERSION,
            state: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| EngineError::Corrupt(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(STATE_FORMAT_TAG) => {}
            other => {
                return Err(EngineError::Corrupt(format!(
                    "unexpected format tag {other:?}"
                )))
            }
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(STATE_FORMAT_VERSION) => {}
            other => {
                return Err(EngineError::Version(format!(
                    "file has {other:?}, this build reads {STATE_FORMAT_VERSION}"
                )))
            }
        }
        let file: StateFile =
            serde_json::from_value(value).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        Ok(file.state)
    }

    /// Writes the state atomically (temporary file + rename).
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let json = self.to_json()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("state")
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(json.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn training_examples(pools: &Pools) -> Vec<TrainingExample> {
    pools
        .partition
        .labeled
        .iter()
        .filter_map(|id| {
            let r = pools.corpus.get(id)?;
            let (label, provenance) = match &r.label_state {
                LabelState::Human { label } => (*label, Provenance::Human),
                LabelState::Pseudo { label, .. } => (*label, Provenance::Pseudo),
                LabelState::Corrected { label } => (*label, Provenance::Corrected),
                LabelState::Unlabeled => return None,
            };
            Some(TrainingExample {
                report_id: r.id.clone(),
                model_text: r.model_text.clone(),
                label,
                provenance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub trace: Vec<TimestepRecord>,
    /// The unlabeled pool ran out before all timesteps completed.
    pub depleted: bool,
    pub state: RunState,
}

/// Runs a whole simulated experiment with oracle labels.
pub fn run_simulation(corpus: Corpus, config: RunConfig) -> Result<SimulationOutcome, EngineError> {
    if let Some(r) = corpus.reports().iter().find(|r| r.oracle_label.is_none()) {
        return Err(EngineError::MissingOracle(r.id.clone()));
    }
    let mut state = RunState::init(corpus, config)?;
    while !state.is_finished() {
        state.run_timestep(LabelSource::Oracle)?;
    }
    Ok(SimulationOutcome {
        trace: state.trace.clone(),
        depleted: state.depleted,
        state,
    })
}
