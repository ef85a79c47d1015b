//! Report datasets: ingestion, preprocessing, and the labeled/unlabeled pool
//! bookkeeping that every active-learning step mutates.
//!
//! A [`Corpus`] owns the reports (and their label states). A [`Pools`] pairs
//! a corpus with its [`PoolPartition`] and is the only way to move reports
//! between the labeled, unlabeled, queried, and test sets.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stopwords;

/// Binary label of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bug,
    Nonbug,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bug => "bug",
            Label::Nonbug => "nonbug",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "bug" => Ok(Label::Bug),
            "nonbug" => Ok(Label::Nonbug),
            other => Err(CorpusError::InvalidLabel {
                row: None,
                value: other.to_string(),
            }),
        }
    }
}

/// Where a report's current label came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum LabelState {
    Unlabeled,
    Human { label: Label },
    Pseudo { label: Label, source_id: String },
    Corrected { label: Label },
}

impl LabelState {
    pub fn label(&self) -> Option<Label> {
        match self {
            LabelState::Unlabeled => None,
            LabelState::Human { label }
            | LabelState::Pseudo { label, .. }
            | LabelState::Corrected { label } => Some(*label),
        }
    }

    pub fn is_labeled(&self) -> bool {
        !matches!(self, LabelState::Unlabeled)
    }
}

/// One repository issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub project: String,
    pub title: String,
    pub body: String,
    /// Title and body joined by a newline. Effort metrics are computed on this.
    pub raw_text: String,
    /// Preprocessed text fed to model backends.
    pub model_text: String,
    pub oracle_label: Option<Label>,
    pub label_state: LabelState,
}

impl Report {
    pub fn new(
        id: impl Into<String>,
        project: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
        oracle_label: Option<Label>,
    ) -> Self {
        let title = title.into();
        let body = body.into();
        let raw_text = format!("{title}\n{body}");
        let model_text = preprocess(&raw_text);
        Report {
            id: id.into(),
            project: project.into(),
            title,
            body,
            raw_text,
            model_text,
            oracle_label,
            label_state: LabelState::Unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source_path: PathBuf,
    pub report_count: usize,
    pub bug_count: usize,
    pub nonbug_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(format!("unknown dataset format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: malformed input: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: missing required field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("{}invalid label `{value}` (expected bug, nonbug or empty)", row.map(|r| format!("row {r}: ")).unwrap_or_default())]
    InvalidLabel { row: Option<usize>, value: String },
    #[error("duplicate report id `{0}`")]
    DuplicateId(String),
    #[error("unknown report id `{0}`")]
    UnknownId(String),
    #[error("requested test size {requested} exceeds corpus size {available}")]
    TestSizeTooLarge { requested: usize, available: usize },
    #[error("test report `{0}` has no oracle label")]
    MissingOracle(String),
    #[error("report `{0}` is not in the queried set")]
    NotQueried(String),
    #[error("report `{0}` is already labeled")]
    AlreadyLabeled(String),
    #[error("report `{0}` is not in the labeled set")]
    NotLabeled(String),
    #[error("report `{0}` is not in the unlabeled pool")]
    NotUnlabeled(String),
    #[error("unsupported corpus file: {0}")]
    Format(String),
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Strip HTML tags, lowercase, drop punctuation and stop words, and join the
/// remaining tokens with single spaces.
pub fn preprocess(raw_text: &str) -> String {
    let lowered = strip_html_tags(raw_text).to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|tok| !stopwords::is_stop_word(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Removes `<...>` spans that look like markup tags: the character after `<`
/// must be a letter, `/` or `!`, and the span may not contain another `<` or
/// a newline. Anything else is left alone.
pub fn strip_html_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let opens_tag = after
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '/' || c == '!');
        let close = after.find(['>', '<', '\n']);
        match close {
            Some(end) if opens_tag && after.as_bytes()[end] == b'>' => {
                // Keep token boundaries intact when a tag separates words.
                out.push(' ');
                rest = &after[end + 1..];
            }
            _ => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

pub const CORPUS_FORMAT_TAG: &str = "triage-corpus";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Report>", into = "Vec<Report>")]
pub struct Corpus {
    reports: Vec<Report>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<Report>> for Corpus {
    type Error = CorpusError;

    fn try_from(reports: Vec<Report>) -> Result<Self, Self::Error> {
        Corpus::from_reports(reports)
    }
}

impl From<Corpus> for Vec<Report> {
    fn from(c: Corpus) -> Self {
        c.reports
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    format: String,
    version: u32,
    reports: Corpus,
}

impl Corpus {
    pub fn from_reports(reports: Vec<Report>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(reports.len());
        for (i, r) in reports.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Corpus { reports, index })
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn get(&self, id: &str) -> Option<&Report> {
        self.index.get(id).map(|&i| &self.reports[i])
    }

    pub fn require(&self, id: &str) -> Result<&Report, CorpusError> {
        self.get(id).ok_or_else(|| CorpusError::UnknownId(id.to_string()))
    }

    fn get_mut(&mut self, id: &str) -> Result<&mut Report, CorpusError> {
        match self.index.get(id) {
            Some(&i) => Ok(&mut self.reports[i]),
            None => Err(CorpusError::UnknownId(id.to_string())),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.reports.iter().map(|r| r.id.as_str())
    }

    pub fn manifest(&self, source_path: impl Into<PathBuf>) -> DatasetManifest {
        let count = |l| {
            self.reports
                .iter()
                .filter(|r| r.oracle_label == Some(l))
                .count()
        };
        DatasetManifest {
            source_path: source_path.into(),
            report_count: self.reports.len(),
            bug_count: count(Label::Bug),
            nonbug_count: count(Label::Nonbug),
        }
    }

    pub fn all_have_oracle_labels(&self) -> bool {
        self.reports.iter().all(|r| r.oracle_label.is_some())
    }

    /// Serializes reports and label states into a single tagged JSON document.
    pub fn to_json(&self) -> Result<String, CorpusError> {
        let file = CorpusFile {
            format: CORPUS_FORMAT_TAG.to_string(),
            version: CORPUS_FORMAT_VERSION,
            reports: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| CorpusError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let header: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CorpusError::Format(e.to_string()))?;
        let tag = header.get("format").and_then(|v| v.as_str());
        let version = header.get("version").and_then(|v| v.as_u64());
        if tag != Some(CORPUS_FORMAT_TAG) {
            return Err(CorpusError::Format(format!(
                "expected format tag `{CORPUS_FORMAT_TAG}`"
            )));
        }
        if version != Some(u64::from(CORPUS_FORMAT_VERSION)) {
            return Err(CorpusError::Format(format!(
                "unsupported corpus version {version:?}"
            )));
        }
        let file: CorpusFile =
            serde_json::from_value(header).map_err(|e| CorpusError::Format(e.to_string()))?;
        Ok(file.reports)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RawRow {
    id: Option<serde_json::Value>,
    project: Option<String>,
    title: Option<String>,
    body: Option<String>,
    label: Option<String>,
}

fn row_to_report(row: usize, raw: RawRow) -> Result<Report, CorpusError> {
    let id = match raw.id {
        Some(serde_json::Value::String(s)) => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(serde_json::Value::Null) | None => {
            return Err(CorpusError::MissingField { row, field: "id" })
        }
        Some(other) => {
            return Err(CorpusError::Malformed {
                row,
                message: format!("id must be a string or number, got {other}"),
            })
        }
    };
    if id.is_empty() {
        return Err(CorpusError::MissingField { row, field: "id" });
    }
    let title = raw.title.ok_or(CorpusError::MissingField { row, field: "title" })?;
    let body = raw.body.ok_or(CorpusError::MissingField { row, field: "body" })?;
    let label = match raw.label.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(v) => Some(v.parse::<Label>().map_err(|_| CorpusError::InvalidLabel {
            row: Some(row),
            value: v.to_string(),
        })?),
    };
    Ok(Report::new(id, raw.project.unwrap_or_default(), title, body, label))
}

/// Reads a JSONL or CSV issue export. Rows are numbered from 1 (for CSV, the
/// header is not counted).
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
) -> Result<(Corpus, DatasetManifest), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut reports = Vec::new();
    match format {
        DatasetFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let row = i + 1;
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| {
                    CorpusError::Malformed {
                        row,
                        message: e.to_string(),
                    }
                })?;
                reports.push(row_to_report(row, raw)?);
            }
        }
        DatasetFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().from_reader(file);
            let headers = rdr
                .headers()
                .map_err(|e| CorpusError::Malformed {
                    row: 0,
                    message: e.to_string(),
                })?
                .clone();
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| CorpusError::Malformed {
                    row,
                    message: e.to_string(),
                })?;
                reports.push(row_to_report(row, csv_row(&headers, &rec))?);
            }
        }
    }
    let corpus = Corpus::from_reports(reports)?;
    let manifest = corpus.manifest(path);
    Ok((corpus, manifest))
}

fn csv_row(headers: &csv::StringRecord, rec: &csv::StringRecord) -> RawRow {
    let field = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .and_then(|i| rec.get(i))
            .map(str::to_string)
    };
    RawRow {
        id: field("id").map(serde_json::Value::String),
        project: field("project"),
        title: field("title"),
        body: field("body"),
        label: field("label"),
    }
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

/// The four disjoint report-id sets of an active-learning run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolPartition {
    pub labeled: BTreeSet<String>,
    pub unlabeled: BTreeSet<String>,
    pub queried: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// How the held-out test set is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestSelection {
    /// Seeded uniform sample of this many reports.
    Size(usize),
    /// Exactly these report ids.
    Ids(Vec<String>),
}

impl PoolPartition {
    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.labeled.len(),
            self.unlabeled.len(),
            self.queried.len(),
            self.test.len(),
        )
    }
}

/// Draws the test set and puts every other report into the unlabeled pool.
///
/// With `require_oracle`, every test report must carry an oracle label.
pub fn init_partition(
    corpus: &Corpus,
    selection: &TestSelection,
    seed: u64,
    require_oracle: bool,
) -> Result<PoolPartition, CorpusError> {
    let mut ids: Vec<&str> = corpus.ids().collect();
    ids.sort_unstable();
    let test: BTreeSet<String> = match selection {
        TestSelection::Size(n) => {
            if *n > ids.len() {
                return Err(CorpusError::TestSizeTooLarge {
                    requested: *n,
                    available: ids.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, ids.len(), *n)
                .into_iter()
                .map(|i| ids[i].to_string())
                .collect()
        }
        TestSelection::Ids(list) => {
            let mut set = BTreeSet::new();
            for id in list {
                corpus.require(id)?;
                if !set.insert(id.clone()) {
                    return Err(CorpusError::DuplicateId(id.clone()));
                }
            }
            set
        }
    };
    if require_oracle {
        if let Some(id) = test
            .iter()
            .find(|id| corpus.get(id).is_some_and(|r| r.oracle_label.is_none()))
        {
            return Err(CorpusError::MissingOracle(id.clone()));
        }
    }
    let unlabeled = ids
        .into_iter()
        .filter(|id| !test.contains(*id))
        .map(str::to_string)
        .collect();
    Ok(PoolPartition {
        labeled: BTreeSet::new(),
        unlabeled,
        queried: BTreeSet::new(),
        test,
    })
}

/// A corpus together with its partition. All label-state transitions go
/// through here so the two stay consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub corpus: Corpus,
    pub partition: PoolPartition,
    /// Corrections applied since the run started, oldest first.
    #[serde(default)]
    pub corrections: Vec<(String, Label)>,
}

impl Pools {
    pub fn new(corpus: Corpus, partition: PoolPartition) -> Self {
        Pools {
            corpus,
            partition,
            corrections: Vec::new(),
        }
    }

    pub fn report(&self, id: &str) -> Result<&Report, CorpusError> {
        self.corpus.require(id)
    }

    /// Moves ids from the unlabeled pool into the queried set.
    pub fn mark_queried<'a>(
        &mut self,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), CorpusError> {
        for id in ids {
            if !self.partition.unlabeled.remove(id) {
                return Err(CorpusError::NotUnlabeled(id.to_string()));
            }
            self.partition.queried.insert(id.to_string());
        }
        Ok(())
    }

    /// Labels a report drawn directly from the unlabeled pool (used for the
    /// initial labeled set of a cold start).
    pub fn label_initial(&mut self, id: &str, label: Label) -> Result<(), CorpusError> {
        if !self.partition.unlabeled.contains(id) {
            return Err(CorpusError::NotUnlabeled(id.to_string()));
        }
        self.corpus.get_mut(id)?.label_state = LabelState::Human { label };
        self.partition.unlabeled.remove(id);
        self.partition.labeled.insert(id.to_string());
        Ok(())
    }

    pub fn apply_human_label(&mut self, id: &str, label: Label) -> Result<(), CorpusError> {
        if self.partition.labeled.contains(id) {
            return Err(CorpusError::AlreadyLabeled(id.to_string()));
        }
        if !self.partition.queried.contains(id) {
            return Err(CorpusError::NotQueried(id.to_string()));
        }
        self.corpus.get_mut(id)?.label_state = LabelState::Human { label };
        self.partition.queried.remove(id);
        self.partition.labeled.insert(id.to_string());
        Ok(())
    }

    pub fn correct_label(&mut self, id: &str, label: Label) -> Result<(), CorpusError> {
        if !self.partition.labeled.contains(id) {
            return Err(CorpusError::NotLabeled(id.to_string()));
        }
        self.corpus.get_mut(id)?.label_state = LabelState::Corrected { label };
        self.corrections.push((id.to_string(), label));
        Ok(())
    }

    pub fn apply_pseudo_label(
        &mut self,
        target_id: &str,
        label: Label,
        source_id: &str,
    ) -> Result<(), CorpusError> {
        if !self.partition.unlabeled.contains(target_id) {
            return Err(CorpusError::NotUnlabeled(target_id.to_string()));
        }
        self.corpus.get_mut(target_id)?.label_state = LabelState::Pseudo {
            label,
            source_id: source_id.to_string(),
        };
        self.partition.unlabeled.remove(target_id);
        self.partition.labeled.insert(target_id.to_string());
        Ok(())
    }

    /// Checks disjointness, totality, and label-state agreement. Returns a
    /// description of the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let p = &self.partition;
        let total = p.labeled.len() + p.unlabeled.len() + p.queried.len() + p.test.len();
        if total != self.corpus.len() {
            return Err(format!(
                "partition holds {total} ids but corpus has {}",
                self.corpus.len()
            ));
        }
        let sets = [
            ("labeled", &p.labeled),
            ("unlabeled", &p.unlabeled),
            ("queried", &p.queried),
            ("test", &p.test),
        ];
        let mut seen: HashMap<&str, &str> = HashMap::with_capacity(total);
        for (name, set) in sets {
            for id in set {
                let report = self
                    .corpus
                    .get(id)
                    .ok_or_else(|| format!("{name} contains unknown id `{id}`"))?;
                if let Some(prev) = seen.insert(id, name) {
                    return Err(format!("id `{id}` is in both {prev} and {name}"));
                }
                let labeled = report.label_state.is_labeled();
                match name {
                    "labeled" if !labeled => {
                        return Err(format!("labeled id `{id}` has no label"))
                    }
                    "unlabeled" | "test" | "queried" if labeled => {
                        return Err(format!("{name} id `{id}` carries a label"))
                    }
                    _ => {}
                }
                if let LabelState::Pseudo { source_id, .. } = &report.label_state {
                    if self.corpus.get(source_id).is_none() {
                        return Err(format!("pseudo label on `{id}` names unknown source"));
                    }
                }
            }
        }
        Ok(())
    }
}
