//! Labeling-effort metrics: Flesch reading ease and keyword identifiability.
//!
//! Both are computed on a report's raw text. Counting rules:
//!
//! - a *word* is a whitespace-delimited token with at least one alphanumeric
//!   character;
//! - a *sentence* ends at `.`, `!` or `?` (when not followed by an
//!   alphanumeric character, so `v1.2` stays one word) or at a blank line;
//!   runs of terminators count once and trailing text forms a final sentence;
//! - *syllables* are counted per word by a vowel-group heuristic, see
//!   [`syllables_of_word`].

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    pub relevant: usize,
    pub irrelevant: usize,
}

pub const RELEVANT_TERMS: &[&str] = &[
    "error",
    "bug",
    "reproduce",
    "issue",
    "behavior",
    "debug",
    "failed",
    "expected",
    "crash",
];

pub const IRRELEVANT_TERMS: &[&str] = &[
    "add",
    "would",
    "like",
    "use",
    "feature",
    "request",
    "support",
    "improvement",
    "want",
    "documentation",
];

/// Keyword lists for identifiability. Defaults to the embedded lists; either
/// list can be replaced from a file with one term per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermLists {
    pub relevant: Vec<String>,
    pub irrelevant: Vec<String>,
}

impl Default for TermLists {
    fn default() -> Self {
        TermLists {
            relevant: RELEVANT_TERMS.iter().map(|s| s.to_string()).collect(),
            irrelevant: IRRELEVANT_TERMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TermLists {
    pub fn read_list(path: &Path) -> io::Result<Vec<String>> {
        Ok(fs::read_to_string(path)?
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect())
    }

    pub fn with_overrides(relevant: Option<&Path>, irrelevant: Option<&Path>) -> io::Result<Self> {
        let mut lists = TermLists::default();
        if let Some(p) = relevant {
            lists.relevant = Self::read_list(p)?;
        }
        if let Some(p) = irrelevant {
            lists.irrelevant = Self::read_list(p)?;
        }
        Ok(lists)
    }
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn trim_to_letters(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphabetic())
}

fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = 0;
    let mut open = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            open = true;
        } else if is_terminator(c) {
            let next = chars.get(i + 1).copied();
            if open && !next.is_some_and(char::is_alphanumeric) {
                sentences += 1;
                open = false;
            }
        } else if c == '\n' {
            // blank line: newline, optional horizontal whitespace, newline
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '\n' && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '\n' {
                if open {
                    sentences += 1;
                    open = false;
                }
                i = j;
            }
        }
        i += 1;
    }
    if open {
        sentences += 1;
    }
    sentences
}

/// Vowel groups (`a e i o u y`) in the lowercased word, minus one for a
/// silent trailing `e` (length ≥ 3, not a consonant + `le` ending), with a
/// floor of one. Surrounding non-letters are ignored; tokens without letters
/// count one syllable.
pub fn syllables_of_word(word: &str) -> usize {
    let letters: Vec<char> = trim_to_letters(word).to_lowercase().chars().collect();
    if letters.is_empty() {
        return 1;
    }
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    let n = letters.len();
    if n >= 3 && letters[n - 1] == 'e' {
        let consonant_le = letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

pub fn count_text(raw_text: &str) -> TextCounts {
    let mut words = 0;
    let mut syllables = 0;
    for tok in raw_text.split_whitespace().filter(|t| is_word(t)) {
        words += 1;
        syllables += syllables_of_word(tok);
    }
    if words == 0 {
        return TextCounts::default();
    }
    TextCounts {
        words,
        sentences: count_sentences(raw_text).max(1),
        syllables,
    }
}

/// Flesch reading ease with the constants 206.83, 1.015 and 84.6.
///
/// Returns `None` for zero words (or zero sentences), where the score is
/// undefined; callers decide how to treat such reports.
pub fn flesch_score(counts: TextCounts) -> Option<f64> {
    if counts.words == 0 || counts.sentences == 0 {
        return None;
    }
    let w = counts.words as f64;
    let words_per_sentence = w / counts.sentences as f64;
    let syllables_per_word = counts.syllables as f64 / w;
    Some(206.83 - 1.015 * words_per_sentence - 84.6 * syllables_per_word)
}

pub fn readability(raw_text: &str) -> Option<f64> {
    flesch_score(count_text(raw_text))
}

/// Share of words that appear in either keyword list, with the default lists.
pub fn identifiability_score(raw_text: &str) -> (f64, TermCounts) {
    identifiability_with(&TermLists::default(), raw_text)
}

pub fn identifiability_with(lists: &TermLists, raw_text: &str) -> (f64, TermCounts) {
    let mut words = 0usize;
    let mut terms = TermCounts::default();
    for tok in raw_text.split_whitespace().filter(|t| is_word(t)) {
        words += 1;
        let norm = trim_to_letters(tok).to_lowercase();
        if lists.relevant.contains(&norm) {
            terms.relevant += 1;
        } else if lists.irrelevant.contains(&norm) {
            terms.irrelevant += 1;
        }
    }
    if words == 0 {
        return (0.0, terms);
    }
    (
        (terms.relevant + terms.irrelevant) as f64 / words as f64,
        terms,
    )
}
