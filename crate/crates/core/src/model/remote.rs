use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Embedding, ModelBackend, ModelError, ProbabilityPair, TrainingExample, UpdateMode};
use crate::corpus::Label;

/// Texts per predict/embed request.
const BATCH: usize = 256;

#[derive(Debug, Serialize, Deserialize)]
pub struct WireExample {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireUpdate {
    pub mode: UpdateMode,
    pub examples: Vec<WireExample>,
}

#[derive(Debug, Deserialize)]
struct UpdateResponse {
    status: String,
    version: u64,
}

#[derive(Debug, Serialize)]
struct TextsRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct PredictResponse {
    probs: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for an external model server. Weights live on the server; only the
/// endpoint, declared dimension, and last acknowledged version are kept here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackend {
    pub endpoint: String,
    pub declared_dim: usize,
    version: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    600_000
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, declared_dim: usize) -> Self {
        RemoteBackend {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            declared_dim,
            version: 0,
            timeout_ms: default_timeout_ms(),
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn call<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ModelError> {
        let url = format!("{}{}", self.endpoint, path);
        let mut resp = self
            .agent()
            .post(&url)
            .send_json(body)
            .map_err(|e| ModelError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(ModelError::Unavailable(format!("{url}: HTTP {status}")));
        }
        if status >= 400 {
            return Err(ModelError::Malformed(format!("{url}: HTTP {status}")));
        }
        let text = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_string()
            .map_err(|e| ModelError::Unavailable(format!("{url}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Malformed(format!("{url}: {e}")))
    }
}

impl ModelBackend for RemoteBackend {
    fn update(&mut self, examples: &[TrainingExample], mode: UpdateMode) -> Result<u64, ModelError> {
        let body = WireUpdate {
            mode,
            examples: examples
                .iter()
                .map(|e| WireExample {
                    id: e.report_id.clone(),
                    text: e.model_text.clone(),
                    label: e.label,
                })
                .collect(),
        };
        let resp: UpdateResponse = self.call("/v1/update", &body)?;
        if resp.status != "ok" {
            return Err(ModelError::Malformed(format!("update status `{}`", resp.status)));
        }
        if resp.version <= self.version {
            return Err(ModelError::Malformed(format!(
                "update version {} did not advance past {}",
                resp.version, self.version
            )));
        }
        self.version = resp.version;
        Ok(self.version)
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ProbabilityPair>, ModelError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(BATCH) {
            let resp: PredictResponse = self.call("/v1/predict", &TextsRequest { texts: chunk })?;
            if resp.probs.len() != chunk.len() {
                return Err(ModelError::Malformed(format!(
                    "predict returned {} rows for {} texts",
                    resp.probs.len(),
                    chunk.len()
                )));
            }
            for [p_bug, p_nonbug] in resp.probs {
                let valid = (0.0..=1.0).contains(&p_bug)
                    && (0.0..=1.0).contains(&p_nonbug)
                    && (p_bug + p_nonbug - 1.0).abs() <= 1e-6;
                if !valid {
                    return Err(ModelError::Malformed(format!(
                        "invalid probability pair [{p_bug}, {p_nonbug}]"
                    )));
                }
                out.push(ProbabilityPair::from_bug(p_bug / (p_bug + p_nonbug)));
            }
        }
        Ok(out)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ModelError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(BATCH) {
            let resp: EmbedResponse = self.call("/v1/embed", &TextsRequest { texts: chunk })?;
            if resp.dim != self.declared_dim {
                return Err(ModelError::DimensionMismatch {
                    expected: self.declared_dim,
                    got: resp.dim,
                });
            }
            if resp.vectors.len() != chunk.len() {
                return Err(ModelError::Malformed(format!(
                    "embed returned {} vectors for {} texts",
                    resp.vectors.len(),
                    chunk.len()
                )));
            }
            for values in resp.vectors {
                if values.len() != self.declared_dim {
                    return Err(ModelError::DimensionMismatch {
                        expected: self.declared_dim,
                        got: values.len(),
                    });
                }
                out.push(Embedding { values });
            }
        }
        Ok(out)
    }

    fn dimension(&self) -> usize {
        self.declared_dim
    }

    fn version(&self) -> u64 {
        self.version
    }
}
