//! Embedded English stop-word list used when building model input text.
//!
//! The list is fixed so preprocessing is reproducible across machines. Words
//! that carry bug/non-bug signal (`would`, `like`, `use`, `want`, `add`, ...)
//! are deliberately absent.

pub const STOP_WORDS_VERSION: u32 = 1;

pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "same",
    "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "you", "your", "yours", "yourself",
    "yourselves",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_is_sorted_and_unique() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
        assert!((110..=140).contains(&STOP_WORDS.len()));
    }

    #[test]
    fn common_function_words_present() {
        for w in ["the", "is", "a", "an", "of", "to", "and", "in", "that", "it"] {
            assert!(is_stop_word(w), "{w}");
        }
        for w in ["bug", "crash", "would", "like", "use", "want", "add", "app"] {
            assert!(!is_stop_word(w), "{w}");
        }
    }
}
