//! Per-timestep records and their CSV export/import.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::evalstats::{CompareMetric, ConfusionMatrix, Metrics};
use crate::pseudolabel::PseudoAssignment;
use crate::sampling::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepRecord {
    /// 1-based timestep index.
    pub t: usize,
    pub strategy: Strategy,
    pub k: usize,
    pub s: usize,
    pub seed: u64,
    pub queried_ids: Vec<String>,
    pub mean_readability: Option<f64>,
    pub sd_readability: Option<f64>,
    pub mean_identifiability: Option<f64>,
    pub sd_identifiability: Option<f64>,
    pub pseudo_count: usize,
    pub pseudo_assignments: Vec<PseudoAssignment>,
    /// Test-set metrics of the model at the end of the timestep; absent when
    /// the run has no test set.
    pub metrics: Option<Metrics>,
    pub confusion: Option<ConfusionMatrix>,
    pub du_size: usize,
    pub dl_size: usize,
    pub duration_ms: u64,
}

pub const TRACE_HEADER: &[&str] = &[
    "t",
    "strategy",
    "k",
    "s",
    "seed",
    "f1",
    "precision",
    "recall",
    "accuracy",
    "mean_readability",
    "sd_readability",
    "mean_identifiability",
    "sd_identifiability",
    "pseudo_count",
    "du_size",
    "dl_size",
    "duration_ms",
];

/// One parsed row of a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub strategy: String,
    pub k: usize,
    pub s: usize,
    pub seed: u64,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_readability: Option<f64>,
    pub sd_readability: Option<f64>,
    pub mean_identifiability: Option<f64>,
    pub sd_identifiability: Option<f64>,
    pub pseudo_count: usize,
    pub du_size: usize,
    pub dl_size: usize,
    pub duration_ms: u64,
}

impl TraceRow {
    pub fn metric(&self, metric: CompareMetric) -> Option<f64> {
        match metric {
            CompareMetric::F1 => self.f1,
            CompareMetric::Precision => self.precision,
            CompareMetric::Recall => self.recall,
            CompareMetric::Accuracy => self.accuracy,
            CompareMetric::Readability => self.mean_readability,
            CompareMetric::Identifiability => self.mean_identifiability,
        }
    }
}

impl From<&TimestepRecord> for TraceRow {
    fn from(r: &TimestepRecord) -> Self {
        TraceRow {
            t: r.t,
            strategy: r.strategy.to_string(),
            k: r.k,
            s: r.s,
            seed: r.seed,
            f1: r.metrics.map(|m| m.f1),
            precision: r.metrics.map(|m| m.precision),
            recall: r.metrics.map(|m| m.recall),
            accuracy: r.metrics.map(|m| m.accuracy),
            mean_readability: r.mean_readability,
            sd_readability: r.sd_readability,
            mean_identifiability: r.mean_identifiability,
            sd_identifiability: r.sd_identifiability,
            pseudo_count: r.pseudo_count,
            du_size: r.du_size,
            dl_size: r.dl_size,
            duration_ms: r.duration_ms,
        }
    }
}

pub fn write_trace_csv<W: Write>(records: &[TimestepRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.serialize(TraceRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_csv_string(records: &[TimestepRecord]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_trace_csv<R: Read>(input: R) -> csv::Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect()
}
