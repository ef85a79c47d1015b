//! Brute-force reference implementations and mismatch counters for the fast
//! selection, pseudo-labeling and statistics routines.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::corpus::{init_partition, Corpus, Label, Pools, Report, TestSelection};
use triage_core::evalstats::{best_split, wilcoxon_signed_rank};
use triage_core::model::{
    Embedding, ModelBackend, ModelError, ProbabilityPair, TrainingExample, UpdateMode,
};
use triage_core::pseudolabel::pseudo_label_batch;
use triage_core::sampling::{select_top_k, ScoreComponents, Strategy};

fn scored(id: String, aggregate: f64) -> ScoreComponents {
    ScoreComponents {
        id,
        probs: ProbabilityPair::from_bug(0.5),
        uncertainty_raw: 1.0,
        readability_raw: Some(50.0),
        identifiability_raw: 0.5,
        uncertainty_norm: 0.5,
        readability_norm: 0.5,
        identifiability_norm: 0.5,
        aggregate,
    }
}

/// Random pools of up to 1000 reports; top-k against a full sort.
pub fn top_k_mismatches(rounds: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..rounds {
        let n = rng.random_range(0..=1000usize);
        // coarse values force plenty of ties
        let pool: Vec<ScoreComponents> = (0..n)
            .map(|i| scored(format!("r{:04}", rng.random_range(0..100_000) * 1000 + i), (rng.random_range(0..60) as f64) / 20.0))
            .collect();
        let k = rng.random_range(1..=n.max(1) + 5);
        let mut oracle: Vec<(f64, String)> = pool.iter().map(|s| (s.aggregate, s.id.clone())).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<String> = oracle.into_iter().take(k).map(|(_, id)| id).collect();
        let got = select_top_k(&pool, k, Strategy::EffortAware, 0).unwrap();
        if got.ids != expected {
            mismatches += 1;
        }
        if got.depleted != (n < k) {
            mismatches += 1;
        }
    }
    mismatches
}

/// Embeds each report as a fixed point keyed by its preprocessed text.
struct Points(HashMap<String, Vec<f64>>, usize);

impl ModelBackend for Points {
    fn update(&mut self, _: &[TrainingExample], _: UpdateMode) -> Result<u64, ModelError> {
        Ok(1)
    }
    fn predict(&self, texts: &[&str]) -> Result<Vec<ProbabilityPair>, ModelError> {
        Ok(texts.iter().map(|_| ProbabilityPair::from_bug(0.5)).collect())
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ModelError> {
        Ok(texts.iter().map(|t| Embedding { values: self.0[*t].clone() }).collect())
    }
    fn dimension(&self) -> usize {
        self.1
    }
    fn version(&self) -> u64 {
        1
    }
}

fn brute_force_assignments(
    sources: &[String],
    candidates: &[String],
    points: &HashMap<String, Vec<f64>>,
    s: usize,
) -> Vec<(String, String)> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut sorted_sources = sources.to_vec();
    sorted_sources.sort();
    let mut claimed = vec![false; candidates.len()];
    let mut out = Vec::new();
    for src in &sorted_sources {
        for _ in 0..s {
            let mut best: Option<(f64, usize)> = None;
            for (j, c) in candidates.iter().enumerate() {
                if claimed[j] {
                    continue;
                }
                let d = dist(&points[src], &points[c]);
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && candidates[j] < candidates[bj]),
                };
                if better {
                    best = Some((d, j));
                }
            }
            if let Some((_, j)) = best {
                claimed[j] = true;
                out.push((src.clone(), candidates[j].clone()));
            }
        }
    }
    out
}

/// Random corpora of up to 500 reports; greedy nearest-neighbor claiming
/// with `s = 1` against an O(n·m) scan.
pub fn pseudo_label_mismatches(rounds: u64, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for round in 0..rounds {
        let n = rng.random_range(10..=500usize);
        let dim = rng.random_range(2..=16usize);
        let ids: Vec<String> = (0..n).map(|i| format!("r{round}x{i:03}")).collect();
        let reports = ids
            .iter()
            .map(|id| Report::new(id.clone(), "", id.clone(), "", Some(Label::Bug)))
            .collect();
        let corpus = Corpus::from_reports(reports).unwrap();
        let mut points = HashMap::new();
        let mut by_id = HashMap::new();
        for id in &ids {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            points.insert(corpus.get(id).unwrap().model_text.clone(), v.clone());
            by_id.insert(id.clone(), v);
        }
        let partition = init_partition(&corpus, &TestSelection::Size(0), round, false).unwrap();
        let mut pools = Pools::new(corpus, partition);
        let m = rng.random_range(1..=(n / 5).max(1));
        let sources: Vec<String> = ids.iter().step_by(n / m).take(m).cloned().collect();
        pools.mark_queried(sources.iter().map(String::as_str)).unwrap();
        for (i, id) in sources.iter().enumerate() {
            let label = if i % 2 == 0 { Label::Bug } else { Label::Nonbug };
            pools.apply_human_label(id, label).unwrap();
        }
        let candidates: Vec<String> = pools.partition.unlabeled.iter().cloned().collect();
        let expected = brute_force_assignments(&sources, &candidates, &by_id, 1);

        let got = pseudo_label_batch(&sources, &mut pools, &Points(points, dim), 1).unwrap();
        let got: Vec<(String, String)> = got.into_iter().map(|a| (a.source_id, a.target_id)).collect();
        if got != expected || pools.check_invariants().is_err() {
            mismatches += 1;
        }
    }
    mismatches
}

fn delta_of_partition(groups: &[Vec<f64>], left_mask: u32) -> Option<f64> {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, g) in groups.iter().enumerate() {
        if left_mask & (1 << i) != 0 {
            left.extend(g);
        } else {
            right.extend(g);
        }
    }
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let all: Vec<f64> = left.iter().chain(&right).copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m, n) = (mean(&all), all.len() as f64);
    Some(
        left.len() as f64 / n * (mean(&left) - m).powi(2)
            + right.len() as f64 / n * (mean(&right) - m).powi(2),
    )
}

/// Up to 8 groups; the best contiguous split against every bipartition.
pub fn split_mismatches(rounds: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..rounds {
        let g = rng.random_range(2..=8usize);
        let mut groups: Vec<Vec<f64>> = (0..g)
            .map(|_| {
                let center = rng.random_range(0.0..10.0);
                let n = rng.random_range(2..=12usize);
                (0..n).map(|_| center + rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        groups.sort_by(|a, b| mean(b).partial_cmp(&mean(a)).unwrap());

        // every bipartition of the groups, not only contiguous ones
        let mut best = (0u32, f64::MIN);
        for mask in 1..(1u32 << g) - 1 {
            if let Some(d) = delta_of_partition(&groups, mask) {
                if d > best.1 + 1e-12 {
                    best = (mask, d);
                }
            }
        }
        let refs: Vec<&[f64]> = groups.iter().map(|v| v.as_slice()).collect();
        let (b, d) = best_split(&refs).unwrap();
        let prefix_mask = (1u32 << b) - 1;
        let complement = ((1u32 << g) - 1) ^ prefix_mask;
        let same_cut = best.0 == prefix_mask || best.0 == complement;
        if !same_cut || (d - best.1).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    mismatches
}

fn oracle_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn enumerated_p(diffs: &[f64]) -> f64 {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = oracle_ranks(&abs);
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let observed = w_plus.min(total - w_plus);
    let n = diffs.len();
    let mut extreme = 0u64;
    for signs in 0..(1u64 << n) {
        let wp: f64 = (0..n).filter(|i| signs & (1 << i) != 0).map(|i| ranks[i]).sum();
        if wp.min(total - wp) <= observed + 1e-9 {
            extreme += 1;
        }
    }
    (extreme as f64 / (1u64 << n) as f64).min(1.0)
}

/// Up to 12 pairs; the exact p-value against all 2^n sign assignments.
pub fn wilcoxon_mismatches(rounds: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..rounds {
        let n = rng.random_range(1..=12usize);
        // small integer differences produce ties in |d|
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                let v = rng.random_range(1..=6) as f64;
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        let x: Vec<f64> = diffs.iter().map(|d| 10.0 + d).collect();
        let y = vec![10.0; n];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        if !r.exact || (r.p_two_sided - enumerated_p(&diffs)).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    mismatches
}
