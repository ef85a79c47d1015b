//! Model backends: anything that can be trained on labeled reports, return
//! class probabilities, and embed report text into a fixed-dimension space.
//!
//! Two implementations ship here: [`BuiltinBackend`], a hashed TF-IDF +
//! logistic regression classifier suited to desk-scale runs, and
//! [`RemoteBackend`], a JSON client for an external model server speaking the
//! `/v1/update`, `/v1/predict`, `/v1/embed` protocol.

mod builtin;
pub mod features;
mod remote;

pub use builtin::{BuiltinBackend, BuiltinParams};
pub use remote::{RemoteBackend, WireExample, WireUpdate};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

/// Class probabilities for one report. `p_bug + p_nonbug = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPair {
    pub p_bug: f64,
    pub p_nonbug: f64,
}

impl ProbabilityPair {
    pub fn from_bug(p_bug: f64) -> Self {
        let p_bug = p_bug.clamp(0.0, 1.0);
        ProbabilityPair {
            p_bug,
            p_nonbug: 1.0 - p_bug,
        }
    }

    /// Predicted class. An exact tie goes to `Bug`.
    pub fn label(&self) -> Label {
        if self.p_bug >= self.p_nonbug {
            Label::Bug
        } else {
            Label::Nonbug
        }
    }

    pub fn confidence(&self) -> f64 {
        self.p_bug.max(self.p_nonbug)
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.p_bug)
            && (0.0..=1.0).contains(&self.p_nonbug)
            && (self.p_bug + self.p_nonbug - 1.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Pseudo,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub report_id: String,
    pub model_text: String,
    pub label: Label,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// Fit from scratch.
    Cold,
    /// Continue from the current parameters.
    Warm,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has not been trained yet")]
    NotTrained,
    #[error("cannot train on an empty example set")]
    NoExamples,
    #[error("cold training needs examples of both classes, only saw {0}")]
    SingleClass(Label),
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: declared {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

impl ModelError {
    /// Transport failures may succeed on a later attempt; everything else is
    /// a configuration or protocol problem.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ModelError::Unavailable(_))
    }
}

/// Behavioral contract shared by all backends. `predict` and `embed` must be
/// deterministic between updates and the embedding dimension fixed for the
/// lifetime of an instance.
pub trait ModelBackend {
    /// Trains on `examples` and returns the new model version.
    fn update(&mut self, examples: &[TrainingExample], mode: UpdateMode) -> Result<u64, ModelError>;
    fn predict(&self, texts: &[&str]) -> Result<Vec<ProbabilityPair>, ModelError>;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ModelError>;
    fn dimension(&self) -> usize;
    fn version(&self) -> u64;
}

/// A serializable backend choice, stored inside run state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    Builtin(BuiltinBackend),
    Remote(RemoteBackend),
}

impl Backend {
    pub fn is_remote(&self) -> bool {
        matches!(self, Backend::Remote(_))
    }
}

impl ModelBackend for Backend {
    fn update(&mut self, examples: &[TrainingExample], mode: UpdateMode) -> Result<u64, ModelError> {
        match self {
            Backend::Builtin(b) => b.update(examples, mode),
            Backend::Remote(b) => b.update(examples, mode),
        }
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ProbabilityPair>, ModelError> {
        match self {
            Backend::Builtin(b) => b.predict(texts),
            Backend::Remote(b) => b.predict(texts),
        }
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ModelError> {
        match self {
            Backend::Builtin(b) => b.embed(texts),
            Backend::Remote(b) => b.embed(texts),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            Backend::Builtin(b) => b.dimension(),
            Backend::Remote(b) => b.dimension(),
        }
    }

    fn version(&self) -> u64 {
        match self {
            Backend::Builtin(b) => b.version(),
            Backend::Remote(b) => b.version(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_goes_to_bug() {
        assert_eq!(ProbabilityPair::from_bug(0.5).label(), Label::Bug);
        assert_eq!(ProbabilityPair::from_bug(0.49).label(), Label::Nonbug);
        assert!(ProbabilityPair::from_bug(1.3).is_valid());
    }
}
