//! Hashed text features. FNV-1a is used so bucket assignment is identical
//! across processes and platforms.

use std::hash::Hasher;

use fnv::FnvHasher;

/// Sparse vector as `(bucket, value)` pairs sorted by bucket.
pub type SparseVec = Vec<(u32, f64)>;

pub const CLASSIFIER_BUCKETS: usize = 4096;
pub const EMBEDDING_DIM: usize = 256;

// Distinct salts keep classifier and embedding collisions independent.
const CLASSIFIER_SALT: u8 = 0x43;
const EMBEDDING_SALT: u8 = 0x45;

fn bucket(token: &str, salt: u8, buckets: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(salt);
    h.write(token.as_bytes());
    (h.finish() % buckets as u64) as u32
}

fn hashed_counts(text: &str, salt: u8, buckets: usize) -> SparseVec {
    let mut idx: Vec<u32> = text
        .split_whitespace()
        .map(|t| bucket(t, salt, buckets))
        .collect();
    idx.sort_unstable();
    let mut out: SparseVec = Vec::with_capacity(idx.len());
    for b in idx {
        match out.last_mut() {
            Some((last, v)) if *last == b => *v += 1.0,
            _ => out.push((b, 1.0)),
        }
    }
    out
}

/// Term counts hashed into the classifier's bucket space.
pub fn term_frequencies(text: &str) -> SparseVec {
    hashed_counts(text, CLASSIFIER_SALT, CLASSIFIER_BUCKETS)
}

/// Smoothed inverse document frequency per bucket:
/// `ln((1 + n) / (1 + df)) + 1`.
pub fn fit_idf<'a>(docs: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
    let mut df = vec![0usize; CLASSIFIER_BUCKETS];
    let mut n = 0usize;
    for doc in docs {
        n += 1;
        for (b, _) in term_frequencies(doc) {
            df[b as usize] += 1;
        }
    }
    df.into_iter()
        .map(|d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect()
}

/// L2-normalized TF-IDF vector.
pub fn tfidf(text: &str, idf: &[f64]) -> SparseVec {
    let mut v = term_frequencies(text);
    for (b, x) in v.iter_mut() {
        *x *= idf[*b as usize];
    }
    normalize(&mut v);
    v
}

fn normalize(v: &mut SparseVec) {
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Dense 256-dimensional hashed term-frequency vector, L2-normalized; the
/// zero vector for empty text.
pub fn embedding(text: &str) -> Vec<f64> {
    let mut dense = vec![0.0; EMBEDDING_DIM];
    let mut sparse = hashed_counts(text, EMBEDDING_SALT, EMBEDDING_DIM);
    normalize(&mut sparse);
    for (b, x) in sparse {
        dense[b as usize] = x;
    }
    dense
}
