//! Classification metrics and the statistical tests used to compare runs:
//! Scott-Knott ranking with a Vargha-Delaney Â12 merge rule, and the
//! Wilcoxon signed-rank test.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("sample is empty")]
    EmptySample,
    #[error("split point {split} is invalid for a list of {len}")]
    InvalidSplit { split: usize, len: usize },
    #[error("group `{0}` needs at least 2 samples")]
    TooFewSamples(String),
    #[error("no groups to rank")]
    NoGroups,
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Effect-size threshold below which two sides are considered the same.
pub const A12_NEGLIGIBLE: f64 = 0.06;

/// Differences within this distance of zero are treated as ties.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// Accumulates `(predicted, actual)` pairs, with `Bug` as the positive class.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (Label::Bug, Label::Bug) => cm.tp += 1,
                (Label::Bug, Label::Nonbug) => cm.fp += 1,
                (Label::Nonbug, Label::Nonbug) => cm.tn += 1,
                (Label::Nonbug, Label::Bug) => cm.fn_ += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, accuracy and F1. Undefined ratios are reported as 0.
/// Accuracy is the share of correctly classified reports of either class.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, StatsError> {
    if cm.total() == 0 {
        return Err(StatsError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        f1,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Between-split mean-square gain of cutting `l` before index `split`.
pub fn scott_knott_delta(l: &[f64], split: usize) -> Result<f64, StatsError> {
    if split == 0 || split >= l.len() {
        return Err(StatsError::InvalidSplit {
            split,
            len: l.len(),
        });
    }
    let (l1, l2) = l.split_at(split);
    let n = l.len() as f64;
    let m = mean(l);
    Ok(l1.len() as f64 / n * (mean(l1) - m).powi(2) + l2.len() as f64 / n * (mean(l2) - m).powi(2))
}

/// Probability that a draw from `x` exceeds a draw from `y`, ties counting half.
pub fn a12(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut wins = 0.0;
    for &a in x {
        for &b in y {
            if (a - b).abs() <= EPS {
                wins += 0.5;
            } else if a > b {
                wins += 1.0;
            }
        }
    }
    Ok(wins / (x.len() * y.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGroup {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    /// 1 is best (highest mean).
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGroups {
    /// Ordered by descending mean.
    pub groups: Vec<RankedGroup>,
}

impl RankedGroups {
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().find(|g| g.name == name).map(|g| g.rank)
    }

    pub fn rank_count(&self) -> usize {
        self.groups.iter().map(|g| g.rank).max().unwrap_or(0)
    }
}

/// Boundary (number of leading groups) maximizing Δ over the concatenated
/// samples of `ordered`, with its Δ. Ties go to the earliest boundary.
pub fn best_split(ordered: &[&[f64]]) -> Option<(usize, f64)> {
    if ordered.len() < 2 {
        return None;
    }
    let all: Vec<f64> = ordered.iter().flat_map(|g| g.iter().copied()).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut cut = 0;
    for b in 1..ordered.len() {
        cut += ordered[b - 1].len();
        let d = scott_knott_delta(&all, cut).expect("groups are nonempty");
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((b, d));
        }
    }
    best
}

/// Ranks named sample groups. Groups are ordered by mean (descending), the
/// Δ-maximizing cut is taken, and the cut is kept only if the two sides
/// differ by a non-negligible Â12 (`|Â12 − 0.5| ≥ 0.06`). Both sides are then
/// ranked recursively; each leaf becomes one rank.
pub fn scott_knott(groups: &[(String, Vec<f64>)]) -> Result<RankedGroups, StatsError> {
    if groups.is_empty() {
        return Err(StatsError::NoGroups);
    }
    if let Some((name, _)) = groups.iter().find(|(_, s)| s.len() < 2) {
        return Err(StatsError::TooFewSamples(name.clone()));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let means: Vec<f64> = groups.iter().map(|(_, s)| mean(s)).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .total_cmp(&means[a])
            .then_with(|| groups[a].0.cmp(&groups[b].0))
    });
    let ordered: Vec<&[f64]> = order.iter().map(|&i| groups[i].1.as_slice()).collect();

    let mut leaves = Vec::new();
    split_recursive(&ordered, 0, &mut leaves);
    let mut ranks = vec![0; ordered.len()];
    for (rank, (start, end)) in leaves.iter().enumerate() {
        for r in &mut ranks[*start..*end] {
            *r = rank + 1;
        }
    }
    Ok(RankedGroups {
        groups: order
            .iter()
            .zip(ranks)
            .map(|(&i, rank)| RankedGroup {
                name: groups[i].0.clone(),
                mean: means[i],
                std_dev: std_dev(&groups[i].1),
                rank,
            })
            .collect(),
    })
}

fn split_recursive(ordered: &[&[f64]], offset: usize, leaves: &mut Vec<(usize, usize)>) {
    if let Some((b, _)) = best_split(ordered) {
        let left: Vec<f64> = ordered[..b].iter().flat_map(|g| g.iter().copied()).collect();
        let right: Vec<f64> = ordered[b..].iter().flat_map(|g| g.iter().copied()).collect();
        let effect = a12(&left, &right).expect("nonempty sides");
        if (effect - 0.5).abs() >= A12_NEGLIGIBLE {
            split_recursive(&ordered[..b], offset, leaves);
            split_recursive(&ordered[b..], offset + b, leaves);
            return;
        }
    }
    leaves.push((offset, offset + ordered.len()));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Largest effective sample size for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX_N: usize = 15;

/// Average ranks (1-based) of `values`; tied values share the mean of their
/// positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && (values[idx[j]] - values[idx[i]]).abs() <= EPS {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes get average ranks. For up
/// to 15 remaining pairs the p-value is exact (the null distribution of W+ is
/// built by dynamic programming over doubled ranks); above that a normal
/// approximation with tie-corrected variance and continuity correction is
/// used. If every difference is zero, `p = 1`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| d.abs() > EPS)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_two_sided: 1.0,
            exact: true,
        });
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p, exact) = if n <= WILCOXON_EXACT_MAX_N {
        // doubled ranks are integers even with ties
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let sum: usize = doubled.iter().sum();
        let mut counts = vec![0u64; sum + 1];
        counts[0] = 1;
        for &r in &doubled {
            for w in (r..=sum).rev() {
                counts[w] += counts[w - r];
            }
        }
        let observed = (statistic * 2.0).round() as usize;
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|(w, _)| (*w).min(sum - w) <= observed)
            .map(|(_, c)| c)
            .sum();
        ((extreme as f64 / 2f64.powi(n as i32)).min(1.0), true)
    } else {
        let nf = n as f64;
        let mut abs_sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        abs_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < abs_sorted.len() {
            let mut j = i + 1;
            while j < abs_sorted.len() && (abs_sorted[j] - abs_sorted[i]).abs() <= EPS {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((statistic - mu).abs() - 0.5).max(0.0) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * (1.0 - normal.cdf(z))).min(1.0)
        };
        (p, false)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        n,
        p_two_sided: p,
        exact,
    })
}

/// Which metric of a run trace to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareMetric {
    F1,
    Precision,
    Recall,
    Accuracy,
    Readability,
    Identifiability,
}

impl std::str::FromStr for CompareMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "f1" => CompareMetric::F1,
            "precision" => CompareMetric::Precision,
            "recall" => CompareMetric::Recall,
            "accuracy" => CompareMetric::Accuracy,
            "readability" => CompareMetric::Readability,
            "identifiability" => CompareMetric::Identifiability,
            other => return Err(format!("unknown metric `{other}`")),
        })
    }
}

impl CompareMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareMetric::F1 => "f1",
            CompareMetric::Precision => "precision",
            CompareMetric::Recall => "recall",
            CompareMetric::Accuracy => "accuracy",
            CompareMetric::Readability => "readability",
            CompareMetric::Identifiability => "identifiability",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cm(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    #[test]
    fn metric_fixtures() {
        let m = metrics(&cm(8, 2, 8, 2)).unwrap();
        assert_abs_diff_eq!(m.precision, 0.8);
        assert_abs_diff_eq!(m.recall, 0.8);
        assert_abs_diff_eq!(m.accuracy, 0.8);
        assert_abs_diff_eq!(m.f1, 0.8, epsilon = 1e-15);

        let m = metrics(&cm(0, 0, 10, 0)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));

        let m = metrics(&cm(5, 0, 5, 0)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));

        // no positive predictions on a set with positives
        let m = metrics(&cm(0, 0, 3, 4)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));

        assert_eq!(metrics(&cm(0, 0, 0, 0)), Err(StatsError::EmptyMatrix));
    }

    #[test]
    fn confusion_from_pairs() {
        use Label::*;
        let c = ConfusionMatrix::from_pairs([(Bug, Bug), (Bug, Nonbug), (Nonbug, Bug), (Nonbug, Nonbug), (Bug, Bug)]);
        assert_eq!(c, cm(2, 1, 1, 1));
    }

    #[test]
    fn delta_fixtures() {
        let l = [1.0, 2.0, 9.0, 10.0];
        assert_abs_diff_eq!(scott_knott_delta(&l, 2).unwrap(), 16.0);
        assert_abs_diff_eq!(scott_knott_delta(&l, 1).unwrap(), 6.75);
        assert_eq!(scott_knott_delta(&[3.0; 4], 2).unwrap(), 0.0);
        assert!(scott_knott_delta(&l, 0).is_err());
        assert!(scott_knott_delta(&l, 4).is_err());
    }

    #[test]
    fn a12_fixtures() {
        assert_eq!(a12(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(a12(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(a12(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.375);
        assert_eq!(a12(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    fn spread(base: f64) -> Vec<f64> {
        (0..10).map(|i| base + i as f64 * 0.01).collect()
    }

    #[test]
    fn scott_knott_examples() {
        let r = scott_knott(&[("low".into(), spread(0.0)), ("high".into(), spread(10.0))]).unwrap();
        assert_eq!(r.rank_of("high"), Some(1));
        assert_eq!(r.rank_of("low"), Some(2));

        let r = scott_knott(&[("a".into(), spread(1.0)), ("b".into(), spread(1.0))]).unwrap();
        assert_eq!(r.rank_count(), 1);

        let wide = |base: f64| (0..10).map(|i| base + i as f64 * 0.1).collect::<Vec<_>>();
        let r = scott_knott(&[
            ("zero".into(), wide(0.0)),
            ("near".into(), wide(0.001)),
            ("ten".into(), wide(10.0)),
        ])
        .unwrap();
        assert_eq!(r.rank_of("ten"), Some(1));
        assert_eq!(r.rank_of("zero"), Some(2));
        assert_eq!(r.rank_of("near"), Some(2));

        assert_eq!(
            scott_knott(&[("x".into(), vec![1.0])]),
            Err(StatsError::TooFewSamples("x".into()))
        );
        assert_eq!(scott_knott(&[]), Err(StatsError::NoGroups));
    }

    #[test]
    fn wilcoxon_fixtures() {
        let zeros = [0.0; 4];
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0], &zeros).unwrap();
        assert_eq!(r.w_plus, r.w_minus);
        assert_eq!(r.p_two_sided, 1.0);

        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_abs_diff_eq!(r.p_two_sided, 0.0625, epsilon = 1e-15);
        assert!(r.exact);

        let r = wilcoxon_signed_rank(&[3.0, 3.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.p_two_sided, 1.0);

        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[], &[]).is_err());
    }

    #[test]
    fn wilcoxon_large_sample_uses_normal_approximation() {
        let x: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let y = vec![0.0; 30];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!r.exact);
        // z = (465/2 - 0.5) / sqrt(30*31*61/24) ≈ 4.7836
        assert!(r.p_two_sided < 1e-5);
        let mixed: Vec<f64> = (1..=30).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        assert!(wilcoxon_signed_rank(&mixed, &y).unwrap().p_two_sided > 0.5);
    }

    #[test]
    fn average_rank_ties() {
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0, 2.0]), vec![1.5, 1.5, 3.5, 3.5]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn a12_complements(
            x in proptest::collection::btree_set(0i32..1000, 1..20),
            y in proptest::collection::btree_set(1000i32..2000, 1..20),
            shuffle in proptest::collection::vec(0i32..2000, 0..10),
        ) {
            // disjoint values guarantee no ties
            let x: Vec<f64> = x.into_iter().chain(shuffle.iter().copied().filter(|v| *v < 1000)).map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let x: Vec<f64> = { let mut v = x; v.sort_by(f64::total_cmp); v.dedup(); v };
            prop_assert!((a12(&x, &y).unwrap() + a12(&y, &x).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn f1_bounds(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let m = metrics(&cm(tp, fp, tn, fn_)).unwrap();
            prop_assert!(m.f1 <= (2.0 * m.precision).min(2.0 * m.recall) + 1e-12);
            prop_assert_eq!(m.f1 == 0.0, m.precision * m.recall == 0.0);
        }

        #[test]
        fn scott_knott_scale_invariant(
            groups in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 2..8), 1..6),
            scale in 0.1f64..50.0,
        ) {
            let named: Vec<(String, Vec<f64>)> =
                groups.iter().enumerate().map(|(i, g)| (format!("g{i}"), g.clone())).collect();
            let scaled: Vec<(String, Vec<f64>)> = named
                .iter()
                .map(|(n, g)| (n.clone(), g.iter().map(|v| v * scale).collect()))
                .collect();
            let a = scott_knott(&named).unwrap();
            let b = scott_knott(&scaled).unwrap();
            for g in &a.groups {
                prop_assert_eq!(Some(g.rank), b.rank_of(&g.name));
            }
        }
    }
}
