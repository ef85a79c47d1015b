//! Acquisition: entropy uncertainty, running max-min normalization, the
//! quality-effort score, and top-k selection under four strategies.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Report;
use crate::model::{ModelBackend, ModelError, ProbabilityPair};
use crate::textmetrics::{self, TermLists};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("normalization bounds are not initialized")]
    UninitializedBounds,
    #[error("query size must be at least 1, got {0}")]
    InvalidK(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Binary entropy of the class distribution, in bits. `0 · log 0 = 0`.
pub fn uncertainty(probs: ProbabilityPair) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    h(probs.p_bug) + h(probs.p_nonbug)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    pub min_seen: f64,
    pub max_seen: f64,
}

impl MetricBounds {
    fn widen(bounds: &mut Option<MetricBounds>, values: impl Iterator<Item = f64>) {
        for v in values {
            match bounds {
                None => {
                    *bounds = Some(MetricBounds {
                        min_seen: v,
                        max_seen: v,
                    })
                }
                Some(b) => {
                    b.min_seen = b.min_seen.min(v);
                    b.max_seen = b.max_seen.max(v);
                }
            }
        }
    }
}

/// Extreme values seen so far for each metric. Bounds only ever widen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub uncertainty: Option<MetricBounds>,
    pub readability: Option<MetricBounds>,
    pub identifiability: Option<MetricBounds>,
}

/// Unnormalized metrics for one report. `readability` is `None` for reports
/// with no words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub uncertainty: f64,
    pub readability: Option<f64>,
    pub identifiability: f64,
}

impl NormalizationBounds {
    /// Widens each metric's bounds with a batch. Zero-word reports contribute
    /// only their uncertainty.
    pub fn update(&mut self, batch: &[RawScores]) {
        MetricBounds::widen(&mut self.uncertainty, batch.iter().map(|s| s.uncertainty));
        MetricBounds::widen(&mut self.readability, batch.iter().filter_map(|s| s.readability));
        MetricBounds::widen(
            &mut self.identifiability,
            batch
                .iter()
                .filter(|s| s.readability.is_some())
                .map(|s| s.identifiability),
        );
    }
}

/// Max-min scaling into `[0, 1]`, clamped. Degenerate bounds (`min == max`)
/// map everything to 0.5.
pub fn normalize(value: f64, bounds: Option<MetricBounds>) -> Result<f64, SamplingError> {
    let b = bounds.ok_or(SamplingError::UninitializedBounds)?;
    if b.max_seen == b.min_seen {
        return Ok(0.5);
    }
    Ok(((value - b.min_seen) / (b.max_seen - b.min_seen)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub id: String,
    pub probs: ProbabilityPair,
    pub uncertainty_raw: f64,
    pub readability_raw: Option<f64>,
    pub identifiability_raw: f64,
    pub uncertainty_norm: f64,
    pub readability_norm: f64,
    pub identifiability_norm: f64,
    /// Unit-weighted sum of the three normalized components.
    pub aggregate: f64,
}

/// Raw effort metrics of a report's text.
pub fn effort_scores(raw_text: &str, lists: &TermLists) -> (Option<f64>, f64) {
    (
        textmetrics::readability(raw_text),
        textmetrics::identifiability_with(lists, raw_text).0,
    )
}

/// Scores every report in `pool`: raw metrics first, then the bounds are
/// widened with the whole batch, then every report is normalized against the
/// same bounds.
pub fn score_reports<B: ModelBackend + ?Sized>(
    pool: &[&Report],
    backend: &B,
    bounds: &mut NormalizationBounds,
    lists: &TermLists,
) -> Result<Vec<ScoreComponents>, SamplingError> {
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<&str> = pool.iter().map(|r| r.model_text.as_str()).collect();
    let probs = backend.predict(&texts)?;
    let raw: Vec<RawScores> = pool
        .par_iter()
        .zip(probs.par_iter())
        .map(|(r, p)| {
            let (readability, identifiability) = effort_scores(&r.raw_text, lists);
            RawScores {
                uncertainty: uncertainty(*p),
                readability,
                identifiability,
            }
        })
        .collect();
    bounds.update(&raw);
    combine(pool, &probs, &raw, bounds)
}

/// Normalizes pre-computed raw scores against `bounds` (no widening).
pub fn combine(
    pool: &[&Report],
    probs: &[ProbabilityPair],
    raw: &[RawScores],
    bounds: &NormalizationBounds,
) -> Result<Vec<ScoreComponents>, SamplingError> {
    pool.iter()
        .zip(probs)
        .zip(raw)
        .map(|((r, p), s)| {
            let u = normalize(s.uncertainty, bounds.uncertainty)?;
            let (rd, id) = match s.readability {
                Some(read) => (
                    normalize(read, bounds.readability)?,
                    normalize(s.identifiability, bounds.identifiability)?,
                ),
                None => (0.0, 0.0),
            };
            Ok(ScoreComponents {
                id: r.id.clone(),
                probs: *p,
                uncertainty_raw: s.uncertainty,
                readability_raw: s.readability,
                identifiability_raw: s.identifiability,
                uncertainty_norm: u,
                readability_norm: rd,
                identifiability_norm: id,
                aggregate: u + rd + id,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    EffortAware,
    Uncertainty,
    Random,
    Confidence,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EffortAware => "effort-aware",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Random => "random",
            Strategy::Confidence => "confidence",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "effort-aware" | "effort_aware" => Ok(Strategy::EffortAware),
            "uncertainty" => Ok(Strategy::Uncertainty),
            "random" => Ok(Strategy::Random),
            "confidence" => Ok(Strategy::Confidence),
            other => Err(format!(
                "unknown strategy `{other}` (expected effort-aware, uncertainty, random or confidence)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub ids: Vec<String>,
    /// The pool held fewer than `k` reports.
    pub depleted: bool,
}

fn by_key_desc_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Picks up to `k` report ids from the scored pool. Deterministic strategies
/// rank by their key descending with ties broken by ascending id; `random`
/// draws uniformly without replacement from the id-sorted pool using `seed`.
pub fn select_top_k(
    scored: &[ScoreComponents],
    k: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Selection, SamplingError> {
    if k == 0 {
        return Err(SamplingError::InvalidK(k));
    }
    let depleted = scored.len() < k;
    let take = k.min(scored.len());
    let ids = match strategy {
        Strategy::Random => {
            let mut pool: Vec<&str> = scored.iter().map(|s| s.id.as_str()).collect();
            pool.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, pool.len(), take)
                .into_iter()
                .map(|i| pool[i].to_string())
                .collect()
        }
        _ => {
            let key = |s: &ScoreComponents| match strategy {
                Strategy::EffortAware => s.aggregate,
                Strategy::Uncertainty => s.uncertainty_raw,
                Strategy::Confidence => s.probs.confidence(),
                Strategy::Random => unreachable!(),
            };
            let mut ranked: Vec<(f64, &str)> =
                scored.iter().map(|s| (key(s), s.id.as_str())).collect();
            if take < ranked.len() {
                ranked.select_nth_unstable_by(take, |a, b| by_key_desc_then_id(*a, *b));
                ranked.truncate(take);
            }
            ranked.sort_unstable_by(|a, b| by_key_desc_then_id(*a, *b));
            ranked.into_iter().map(|(_, id)| id.to_string()).collect()
        }
    };
    Ok(Selection { ids, depleted })
}
