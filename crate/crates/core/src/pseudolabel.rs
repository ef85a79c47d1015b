//! Nearest-neighbor pseudo-labeling: every newly human-labeled report lends
//! its label to the closest still-unlabeled reports in embedding space.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Label, Pools};
use crate::model::{Embedding, ModelBackend, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoAssignment {
    pub source_id: String,
    pub target_id: String,
    pub distance: f64,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum PseudoError {
    #[error("embedding dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("source report `{0}` has no label")]
    UnlabeledSource(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn closer(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Closest candidate by Euclidean distance, ties to the lower id. `None`
/// when there are no candidates.
pub fn nearest_unlabeled<'a>(
    source: &Embedding,
    candidates: &[(&'a str, &Embedding)],
) -> Result<Option<(&'a str, f64)>, PseudoError> {
    let mut best: Option<(f64, &str)> = None;
    for &(id, emb) in candidates {
        if emb.dimension() != source.dimension() {
            return Err(PseudoError::DimensionMismatch {
                expected: source.dimension(),
                got: emb.dimension(),
            });
        }
        let d = (euclidean(&source.values, &emb.values), id);
        if best.is_none_or(|b| closer(&d, &b) == Ordering::Less) {
            best = Some(d);
        }
    }
    Ok(best.map(|(d, id)| (id, d)))
}

/// Pseudo-labels up to `s` unlabeled reports per source.
///
/// Sources are processed in ascending id order; each claims its `s` nearest
/// reports that no earlier source has claimed. Claimed reports move from the
/// unlabeled pool into the labeled pool with a pseudo label naming their
/// source. Embeddings come from `backend` as it stands now.
pub fn pseudo_label_batch<B: ModelBackend + ?Sized>(
    sources: &[String],
    pools: &mut Pools,
    backend: &B,
    s: usize,
) -> Result<Vec<PseudoAssignment>, PseudoError> {
    if s == 0 || sources.is_empty() || pools.partition.unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    let mut sources: Vec<&String> = sources.iter().collect();
    sources.sort();
    sources.dedup();
    let source_labels = sources
        .iter()
        .map(|id| {
            pools
                .report(id)?
                .label_state
                .label()
                .ok_or_else(|| PseudoError::UnlabeledSource(id.to_string()))
        })
        .collect::<Result<Vec<Label>, PseudoError>>()?;

    let candidate_ids: Vec<&str> = pools.partition.unlabeled.iter().map(String::as_str).collect();
    let texts = |ids: &[&str]| -> Result<Vec<String>, CorpusError> {
        ids.iter()
            .map(|id| pools.report(id).map(|r| r.model_text.clone()))
            .collect()
    };
    let source_ids: Vec<&str> = sources.iter().map(|s| s.as_str()).collect();
    let source_text = texts(&source_ids)?;
    let candidate_text = texts(&candidate_ids)?;
    let source_emb = backend.embed(&source_text.iter().map(String::as_str).collect::<Vec<_>>())?;
    let candidate_emb =
        backend.embed(&candidate_text.iter().map(String::as_str).collect::<Vec<_>>())?;
    let dim = backend.dimension();
    if let Some(bad) = source_emb.iter().chain(&candidate_emb).find(|e| e.dimension() != dim) {
        return Err(PseudoError::DimensionMismatch {
            expected: dim,
            got: bad.dimension(),
        });
    }

    let mut claimed = vec![false; candidate_ids.len()];
    let mut remaining = candidate_ids.len();
    let mut out = Vec::new();
    for ((source_id, src), label) in source_ids.iter().zip(&source_emb).zip(&source_labels) {
        if remaining == 0 {
            break;
        }
        let mut ranked: Vec<(f64, usize)> = candidate_emb
            .par_iter()
            .enumerate()
            .filter(|(i, _)| !claimed[*i])
            .map(|(i, e)| (euclidean(&src.values, &e.values), i))
            .collect();
        let take = s.min(ranked.len());
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            closer(&(a.0, candidate_ids[a.1]), &(b.0, candidate_ids[b.1]))
        };
        if take < ranked.len() {
            ranked.select_nth_unstable_by(take, order);
            ranked.truncate(take);
        }
        ranked.sort_unstable_by(order);
        for (distance, i) in ranked {
            claimed[i] = true;
            remaining -= 1;
            out.push(PseudoAssignment {
                source_id: source_id.to_string(),
                target_id: candidate_ids[i].to_string(),
                distance,
                label: *label,
            });
        }
    }
    for a in &out {
        pools.apply_pseudo_label(&a.target_id, a.label, &a.source_id)?;
    }
    Ok(out)
}
