//! Seeded synthetic corpora for simulation and testing.
//!
//! Each report's label is planted through its vocabulary: bug reports draw
//! from bug-flavored words and the relevant keyword list, other reports from
//! request-flavored words and the irrelevant list. Sentence length, word
//! length and keyword density vary per report independently of the label, so
//! readability and identifiability spread across the whole corpus.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Label, Report};
use crate::textmetrics::{IRRELEVANT_TERMS, RELEVANT_TERMS};

const BUG_WORDS: &[&str] = &[
    "stacktrace", "segfault", "null", "pointer", "exception", "freeze", "hang", "timeout",
    "broken", "wrong", "panic", "corrupt", "regression", "leak", "abort", "stuck",
];

const REQUEST_WORDS: &[&str] = &[
    "suggestion", "enhance", "option", "theme", "dark", "mode", "plugin", "roadmap",
    "customize", "export", "shortcut", "nicer", "integration", "proposal", "idea", "optional",
];

const SHORT_FILLER: &[&str] = &[
    "app", "page", "file", "user", "time", "save", "open", "load", "click", "run", "build",
    "tab", "menu", "view", "list", "text", "link", "icon", "box", "form",
];

const LONG_FILLER: &[&str] = &[
    "configuration", "initialization", "synchronization", "administrator", "notification",
    "compatibility", "authentication", "visualization", "infrastructure", "serialization",
    "responsibility", "availability", "international", "organization", "communication",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub reports: usize,
    pub seed: u64,
    pub bug_fraction: f64,
    /// Probability that the oracle label is flipped after generation.
    pub label_noise: f64,
    /// Probability that a keyword comes from the other class's list.
    pub keyword_crossover: f64,
    pub project: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            reports: 1000,
            seed: 0,
            bug_fraction: 0.5,
            label_noise: 0.02,
            keyword_crossover: 0.1,
            project: "synthetic".to_string(),
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

fn generate(rng: &mut ChaCha8Rng, bug: bool, cfg: &SynthConfig) -> (String, String) {
    let (own_words, own_terms, other_terms) = if bug {
        (BUG_WORDS, RELEVANT_TERMS, IRRELEVANT_TERMS)
    } else {
        (REQUEST_WORDS, IRRELEVANT_TERMS, RELEVANT_TERMS)
    };
    let keyword_density = rng.random_range(0.0..0.35);
    let class_density = rng.random_range(0.15..0.35);
    let long_share = rng.random_range(0.0..0.7);
    let sentence_len = rng.random_range(4..=22usize);
    let total = rng.random_range(20..=90usize);

    let draw = |rng: &mut ChaCha8Rng| -> &'static str {
        let roll: f64 = rng.random();
        if roll < keyword_density {
            if rng.random_bool(cfg.keyword_crossover) {
                pick(rng, other_terms)
            } else {
                pick(rng, own_terms)
            }
        } else if roll < keyword_density + class_density {
            pick(rng, own_words)
        } else if rng.random_bool(long_share) {
            pick(rng, LONG_FILLER)
        } else {
            pick(rng, SHORT_FILLER)
        }
    };

    let title_len = rng.random_range(3..=7usize);
    let title_words: Vec<&str> = (0..title_len).map(|_| draw(rng)).collect();
    let mut sentences = Vec::new();
    let mut written = 0;
    while written < total {
        let n = sentence_len.min(total - written).max(1);
        let words: Vec<&str> = (0..n).map(|_| draw(rng)).collect();
        sentences.push(sentence(&words));
        written += n;
    }
    (sentence(&title_words), sentences.join(" "))
}

/// Generates a corpus with ids `syn-00001`, `syn-00002`, ...
pub fn synthetic_corpus(cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reports = (0..cfg.reports)
        .map(|i| {
            let bug = rng.random_bool(cfg.bug_fraction);
            let (title, body) = generate(&mut rng, bug, cfg);
            let mut label = if bug { Label::Bug } else { Label::Nonbug };
            if rng.random_bool(cfg.label_noise) {
                label = match label {
                    Label::Bug => Label::Nonbug,
                    Label::Nonbug => Label::Bug,
                };
            }
            Report::new(format!("syn-{:05}", i + 1), cfg.project.clone(), title, body, Some(label))
        })
        .collect();
    Corpus::from_reports(reports).expect("generated ids are unique")
}
