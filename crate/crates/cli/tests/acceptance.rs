//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints exactly one `PASS`/`FAIL` line, then exits non-zero if
//! any failed.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use triage_core::corpus::Corpus;
use triage_core::engine::trace::TimestepRecord;
use triage_core::engine::{run_simulation, LabelSource, RunConfig, RunState, StepPhase};
use triage_core::evalstats::{mean, scott_knott, wilcoxon_signed_rank};
use triage_core::model::ProbabilityPair;
use triage_core::sampling::{uncertainty, Strategy};
use triage_core::synth::{synthetic_corpus, SynthConfig};
use triage_core::textmetrics::{flesch_score, identifiability_score, TextCounts};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const K: usize = 50;
const T: usize = 10;
const TEST_SIZE: usize = 1000;

type Criterion = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        synthetic_corpus(&SynthConfig {
            reports: 5000,
            seed: 2024,
            ..SynthConfig::default()
        })
    })
}

fn experiment_config(strategy: Strategy, s: usize, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(K, strategy, seed);
    c.timesteps = T;
    c.pseudo_s = s;
    c.test_size = TEST_SIZE;
    c
}

/// One trace per seed, simulated in parallel.
fn traces(strategy: Strategy, s: usize) -> Vec<Vec<TimestepRecord>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    run_simulation(corpus().clone(), experiment_config(strategy, s, seed))
                        .expect("simulation")
                        .trace
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn final_f1(trace: &[TimestepRecord]) -> f64 {
    trace.last().and_then(|r| r.metrics).map_or(0.0, |m| m.f1)
}

fn per_step(traces: &[Vec<TimestepRecord>], f: impl Fn(&TimestepRecord) -> Option<f64>) -> Vec<f64> {
    traces.iter().flatten().map(|r| f(r).unwrap_or(f64::NAN)).collect()
}

fn per_seed(traces: &[Vec<TimestepRecord>], f: impl Fn(&TimestepRecord) -> Option<f64> + Copy) -> Vec<f64> {
    traces
        .iter()
        .map(|t| mean(&t.iter().filter_map(f).collect::<Vec<_>>()))
        .collect()
}

fn f1_formulas() -> Outcome {
    let half = uncertainty(ProbabilityPair::from_bug(0.5));
    let sure = uncertainty(ProbabilityPair::from_bug(1.0));
    let skew = uncertainty(ProbabilityPair::from_bug(0.9));
    // independent arithmetic for the skewed pair
    let skew_expected = -(0.9f64 * 0.9f64.log2() + 0.1f64 * 0.1f64.log2());
    let flesch = flesch_score(TextCounts {
        words: 10,
        sentences: 2,
        syllables: 14,
    })
    .unwrap();
    let flesch_expected = 206.83 - 1.015 * (10.0 / 2.0) - 84.6 * (14.0 / 10.0);
    let (ident, counts) = identifiability_score("error bug crash hello world");
    let checks = [
        half == 1.0,
        sure == 0.0,
        (skew - 0.4689955935).abs() <= 1e-9,
        (skew - skew_expected).abs() <= 1e-12,
        (flesch - 83.315).abs() <= 1e-9,
        (flesch - flesch_expected).abs() <= 1e-12,
        ident == 0.6,
        counts.relevant == 3 && counts.irrelevant == 0,
    ];
    outcome(
        checks.iter().all(|c| *c),
        format!("H(.5,.5)={half} H(1,0)={sure} H(.9,.1)={skew:.10} flesch={flesch:.6} I={ident}"),
    )
}

fn f2_oracles() -> Outcome {
    let top_k = oracle::top_k_mismatches(100, 101);
    let pseudo = oracle::pseudo_label_mismatches(50, 202);
    let split = oracle::split_mismatches(300, 303);
    let wilcoxon = oracle::wilcoxon_mismatches(400, 404);
    outcome(
        top_k + pseudo + split + wilcoxon == 0,
        format!("mismatches: top-k {top_k}, pseudo {pseudo}, split {split}, wilcoxon {wilcoxon}"),
    )
}

fn f3_partition() -> Outcome {
    let config = experiment_config(Strategy::EffortAware, 1, 7);
    let mut state = RunState::init(corpus().clone(), config).expect("init");
    let mut violations: Vec<String> = Vec::new();
    let check = |phase: &str, st: &RunState| -> Option<String> {
        if let Err(e) = st.pools.check_invariants() {
            return Some(format!("{phase}: {e}"));
        }
        let (l, u, q, t) = st.pools.partition.sizes();
        if l + u + q + t != st.pools.corpus.len() {
            return Some(format!("{phase}: pools cover {} of {}", l + u + q + t, st.pools.corpus.len()));
        }
        None
    };
    violations.extend(check("init", &state));
    // |D_u| once the first query has been drawn, plus that query
    let mut previous_du = state.pools.partition.unlabeled.len() + state.pools.partition.queried.len();
    while !state.is_finished() {
        state
            .run_timestep_observed(LabelSource::Oracle, &mut |phase: StepPhase, st| {
                violations.extend(check(&format!("t={} {phase:?}", st.trace.len() + 1), st))
            })
            .expect("timestep");
        let r = state.trace.last().unwrap();
        let expected = previous_du - K - r.pseudo_count;
        if r.du_size != expected {
            violations.push(format!("t={}: |D_u|={} expected {expected}", r.t, r.du_size));
        }
        previous_du = r.du_size;
    }
    if state.trace.len() != T {
        violations.push(format!("ran {} timesteps", state.trace.len()));
    }
    outcome(
        violations.is_empty(),
        match violations.first() {
            None => format!("{} timesteps, zero violations", state.trace.len()),
            Some(v) => format!("{} violation(s), first: {v}", violations.len()),
        },
    )
}

fn f4_effort_vs_random() -> Outcome {
    let effort = traces(Strategy::EffortAware, 1);
    let random = traces(Strategy::Random, 1);
    let uncert = traces(Strategy::Uncertainty, 1);

    let read = |r: &TimestepRecord| r.mean_readability;
    let ident = |r: &TimestepRecord| r.mean_identifiability;
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, f) in [("readability", read as fn(&TimestepRecord) -> Option<f64>), ("identifiability", ident)] {
        let (e, r) = (per_step(&effort, f), per_step(&random, f));
        let (me, mr) = (mean(&per_seed(&effort, f)), mean(&per_seed(&random, f)));
        let test = wilcoxon_signed_rank(&e, &r).expect("wilcoxon");
        let seeds_exceed = per_seed(&effort, f)
            .iter()
            .zip(per_seed(&random, f))
            .all(|(a, b)| *a > b);
        pass &= me > mr && seeds_exceed && test.p_two_sided < 0.05 && test.w_plus > test.w_minus;
        lines.push(format!("{name} {me:.3} vs {mr:.3} (p={:.2e})", test.p_two_sided));
    }
    let finals = |t: &[Vec<TimestepRecord>]| t.iter().map(|x| final_f1(x)).collect::<Vec<_>>();
    let (fe, fr, fu) = (finals(&effort), finals(&random), finals(&uncert));
    let min_f1 = fe.iter().chain(&fr).copied().fold(f64::INFINITY, f64::min);
    pass &= min_f1 >= 0.90;
    pass &= mean(&fu) >= mean(&fe) - 0.05;
    lines.push(format!(
        "final F1 effort {:.3} random {:.3} uncertainty {:.3}",
        mean(&fe),
        mean(&fr),
        mean(&fu)
    ));
    outcome(pass, lines.join("; "))
}

fn f5_pseudo_labels() -> Outcome {
    let with = traces(Strategy::EffortAware, 1);
    let without = traces(Strategy::EffortAware, 0);
    let count_law = with.iter().flatten().all(|r| r.pseudo_count == K)
        && without.iter().flatten().all(|r| r.pseudo_count == 0);
    let f1_with = mean(&with.iter().map(|t| final_f1(t)).collect::<Vec<_>>());
    let f1_without = mean(&without.iter().map(|t| final_f1(t)).collect::<Vec<_>>());
    outcome(
        count_law && f1_with >= f1_without - 0.01,
        format!("pseudo count law {count_law}; final F1 s=1 {f1_with:.4} vs s=0 {f1_without:.4}"),
    )
}

fn f6_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_triage");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).current_dir(dir.path()).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["synth", "--reports", "800", "--seed", "3", "--out", "data.jsonl"]);
    run(&["ingest", "--input", "data.jsonl", "--format", "jsonl", "--out", "corpus.json"]);
    for out in ["a.csv", "b.csv"] {
        run(&[
            "simulate", "--corpus", "corpus.json", "--strategy", "effort-aware", "--k", "20",
            "--timesteps", "5", "--test-size", "150", "--seed", "11", "--out", out,
        ]);
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    let rows = a.iter().filter(|c| **c == b'\n').count();
    outcome(a == b && rows == 6, format!("{} bytes, {rows} lines, identical={}", a.len(), a == b))
}

fn f7_scott_knott() -> Outcome {
    let around = |center: f64| -> Vec<f64> {
        (0..10).map(|i| center + (i as f64 - 4.5) * 0.1).collect()
    };
    let split = scott_knott(&[
        ("low".into(), around(0.0)),
        ("high".into(), around(10.0)),
    ])
    .expect("scott-knott");
    let same = scott_knott(&[
        ("a".into(), around(5.0)),
        ("b".into(), around(5.0)),
    ])
    .expect("scott-knott");
    let ranks_ok = split.rank_of("high") == Some(1) && split.rank_of("low") == Some(2);
    outcome(
        split.rank_count() == 2 && same.rank_count() == 1 && ranks_ok,
        format!("separated groups {} rank(s), identical groups {}", split.rank_count(), same.rank_count()),
    )
}

fn f8_resume() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let config = experiment_config(Strategy::EffortAware, 1, 8);
    let control = run_simulation(corpus().clone(), config.clone()).expect("control").trace;

    let mut first = RunState::init(corpus().clone(), config).expect("init");
    for _ in 0..4 {
        first.run_timestep(LabelSource::Oracle).expect("timestep");
    }
    first.save(&path).expect("save");
    drop(first);
    let mut resumed = RunState::load(&path).expect("load");
    while !resumed.is_finished() {
        resumed.run_timestep(LabelSource::Oracle).expect("timestep");
    }
    outcome(
        resumed.trace == control,
        format!("{} records, identical={}", resumed.trace.len(), resumed.trace == control),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("F-1", "formula fixtures", f1_formulas),
        ("F-2", "oracle equivalence", f2_oracles),
        ("F-3", "partition invariants", f3_partition),
        ("F-4", "effort-aware vs random", f4_effort_vs_random),
        ("F-5", "pseudo-labeling", f5_pseudo_labels),
        ("F-6", "determinism", f6_determinism),
        ("F-7", "scott-knott synthetic", f7_scott_knott),
        ("F-8", "resume fidelity", f8_resume),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{id} {name} ... {verdict} ({:.1}s) {}",
            started.elapsed().as_secs_f64(),
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}
