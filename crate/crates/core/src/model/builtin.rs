use log::debug;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{self, SparseVec, CLASSIFIER_BUCKETS, EMBEDDING_DIM};
use super::{Embedding, ModelBackend, ModelError, ProbabilityPair, TrainingExample, UpdateMode};
use crate::corpus::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Fraction of each update's examples kept for the training side of the
    /// logged validation split.
    pub train_fraction: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            train_fraction: 0.8,
        }
    }
}

/// Hashed TF-IDF features (4096 buckets) feeding a logistic regression fit
/// by seeded stochastic gradient descent. Embeddings are a separate 256-dim
/// hashed term-frequency vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinBackend {
    pub params: BuiltinParams,
    seed: u64,
    version: u64,
    /// Fixed at the last cold update.
    idf: Option<Vec<f64>>,
    weights: Vec<f64>,
    bias: f64,
    #[serde(default)]
    last_validation_accuracy: Option<f64>,
}

impl BuiltinBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_params(seed, BuiltinParams::default())
    }

    pub fn with_params(seed: u64, params: BuiltinParams) -> Self {
        BuiltinBackend {
            params,
            seed,
            version: 0,
            idf: None,
            weights: vec![0.0; CLASSIFIER_BUCKETS],
            bias: 0.0,
            last_validation_accuracy: None,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.idf.is_some()
    }

    pub fn weights(&self) -> (&[f64], f64) {
        (&self.weights, self.bias)
    }

    /// Accuracy on the held-back slice of the last update's examples.
    pub fn last_validation_accuracy(&self) -> Option<f64> {
        self.last_validation_accuracy
    }

    /// The feature vector the classifier sees for `text`.
    pub fn featurize(&self, text: &str) -> Result<SparseVec, ModelError> {
        let idf = self.idf.as_ref().ok_or(ModelError::NotTrained)?;
        Ok(features::tfidf(text, idf))
    }

    fn logit(&self, x: &SparseVec) -> f64 {
        self.bias + x.iter().map(|&(b, v)| self.weights[b as usize] * v).sum::<f64>()
    }

    fn fit(&mut self, data: &[(SparseVec, f64)], rng: &mut ChaCha8Rng) {
        let BuiltinParams {
            learning_rate: lr,
            epochs,
            l2,
            ..
        } = self.params;
        // Weights are kept as scale * v so the L2 shrink is O(1) per step.
        let mut scale = 1.0;
        let mut v = std::mem::take(&mut self.weights);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for &i in &order {
                let (x, y) = &data[i];
                let z = self.bias + scale * x.iter().map(|&(b, xv)| v[b as usize] * xv).sum::<f64>();
                let g = sigmoid(z) - y;
                scale *= 1.0 - lr * l2;
                let step = lr * g / scale;
                for &(b, xv) in x {
                    v[b as usize] -= step * xv;
                }
                self.bias -= lr * g;
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
        }
        v.iter_mut().for_each(|w| *w *= scale);
        self.weights = v;
    }

    fn log_validation(&mut self, data: &[(SparseVec, f64)], rng: &mut ChaCha8Rng) {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(rng);
        let cut = ((data.len() as f64) * self.params.train_fraction).round() as usize;
        let held = &idx[cut.min(idx.len())..];
        if held.is_empty() {
            self.last_validation_accuracy = None;
            return;
        }
        let correct = held
            .iter()
            .filter(|&&i| {
                let (x, y) = &data[i];
                (sigmoid(self.logit(x)) >= 0.5) == (*y == 1.0)
            })
            .count();
        let acc = correct as f64 / held.len() as f64;
        debug!(
            "builtin v{} epochs={} validation accuracy {:.4} on {} held-back examples",
            self.version,
            self.params.epochs,
            acc,
            held.len()
        );
        self.last_validation_accuracy = Some(acc);
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn target(label: Label) -> f64 {
    match label {
        Label::Bug => 1.0,
        Label::Nonbug => 0.0,
    }
}

impl ModelBackend for BuiltinBackend {
    /// Cold mode refits IDF and weights from zero; warm mode keeps the IDF
    /// table and continues SGD from the current weights. A warm update with
    /// no examples leaves the model untouched; a warm update on an untrained
    /// model behaves like a cold one.
    fn update(&mut self, examples: &[TrainingExample], mode: UpdateMode) -> Result<u64, ModelError> {
        let mode = if self.is_trained() { mode } else { UpdateMode::Cold };
        if examples.is_empty() {
            return match mode {
                UpdateMode::Cold => Err(ModelError::NoExamples),
                UpdateMode::Warm => Ok(self.version),
            };
        }
        let mut rng = match mode {
            UpdateMode::Cold => {
                let first = examples[0].label;
                if examples.iter().all(|e| e.label == first) {
                    return Err(ModelError::SingleClass(first));
                }
                self.idf = Some(features::fit_idf(examples.iter().map(|e| e.model_text.as_str())));
                self.weights = vec![0.0; CLASSIFIER_BUCKETS];
                self.bias = 0.0;
                ChaCha8Rng::seed_from_u64(self.seed)
            }
            UpdateMode::Warm => ChaCha8Rng::seed_from_u64(
                self.seed ^ (self.version + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ),
        };
        let idf = self.idf.as_ref().expect("idf set above");
        let data: Vec<(SparseVec, f64)> = examples
            .par_iter()
            .map(|e| (features::tfidf(&e.model_text, idf), target(e.label)))
            .collect();
        self.fit(&data, &mut rng);
        self.version += 1;
        self.log_validation(&data, &mut rng);
        Ok(self.version)
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ProbabilityPair>, ModelError> {
        let idf = self.idf.as_ref().ok_or(ModelError::NotTrained)?;
        Ok(texts
            .par_iter()
            .map(|t| ProbabilityPair::from_bug(sigmoid(self.logit(&features::tfidf(t, idf)))))
            .collect())
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ModelError> {
        Ok(texts
            .par_iter()
            .map(|t| Embedding {
                values: features::embedding(t),
            })
            .collect())
    }

    fn dimension(&self) -> usize {
        EMBEDDING_DIM
    }

    fn version(&self) -> u64 {
        self.version
    }
}
