//! Thin async client for the run service's HTTP/JSON interface.

use std::time::Duration;

use reqwest::header::ACCEPT;
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use triage_core::api::{
    AdvanceAccepted, CorrectionRequest, CreateRunRequest, ErrorBody, JobStatus, LabelAck,
    LabelSubmission, QueueResponse, RunSummary,
};
use triage_core::engine::{RunConfig, TimestepRecord};

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{code}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
        details: serde_json::Value,
    },
    #[error("request to {url} failed: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("unexpected response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("advance of run {run_id} did not finish within {waited:?}")]
    Timeout { run_id: String, waited: Duration },
}

impl ClientError {
    /// Machine-readable error code, when the service sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send(&self, url: String, req: RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req
            .send()
            .await
            .map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let text = resp.text().await.unwrap_or_default();
        match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => Err(ClientError::Api {
                status,
                code: body.error.code,
                message: body.error.message,
                details: body.error.details,
            }),
            Err(_) => Err(ClientError::Decode {
                url,
                message: format!("HTTP {status}: {text}"),
            }),
        }
    }

    async fn json<T: DeserializeOwned>(&self, url: String, req: RequestBuilder) -> Result<T, ClientError> {
        let resp = self.send(url.clone(), req).await?;
        let text = resp
            .text()
            .await
            .map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode { url, message: e.to_string() })
    }

    async fn text(&self, url: String, req: RequestBuilder) -> Result<String, ClientError> {
        let resp = self.send(url.clone(), req).await?;
        resp.text()
            .await
            .map_err(|source| ClientError::Transport { url, source })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = self.url(path);
        self.json(url.clone(), self.http.get(&url)).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        self.json(url.clone(), self.http.post(&url).json(body)).await
    }

    pub async fn corpora(&self) -> Result<Vec<String>, ClientError> {
        self.get("/corpora").await
    }

    pub async fn create_run(&self, corpus: &str, config: &RunConfig) -> Result<RunSummary, ClientError> {
        let req = CreateRunRequest {
            corpus: corpus.to_string(),
            config: config.clone(),
        };
        self.post("/runs", &req).await
    }

    pub async fn list_runs(&self) -> Result<Vec<RunSummary>, ClientError> {
        self.get("/runs").await
    }

    pub async fn run(&self, run_id: &str) -> Result<RunSummary, ClientError> {
        self.get(&format!("/runs/{run_id}")).await
    }

    pub async fn queue(&self, run_id: &str) -> Result<QueueResponse, ClientError> {
        self.get(&format!("/runs/{run_id}/queue")).await
    }

    pub async fn submit_label(&self, run_id: &str, submission: &LabelSubmission) -> Result<LabelAck, ClientError> {
        self.post(&format!("/runs/{run_id}/labels"), submission).await
    }

    pub async fn correct_label(&self, run_id: &str, correction: &CorrectionRequest) -> Result<LabelAck, ClientError> {
        self.post(&format!("/runs/{run_id}/corrections"), correction).await
    }

    /// Starts an advance job; poll [`run`](Self::run) or use
    /// [`wait_for_job`](Self::wait_for_job) to observe completion.
    pub async fn advance(&self, run_id: &str) -> Result<AdvanceAccepted, ClientError> {
        self.post(&format!("/runs/{run_id}/advance"), &serde_json::json!({})).await
    }

    /// Polls until the run's advance job is no longer running.
    pub async fn wait_for_job(
        &self,
        run_id: &str,
        poll: Duration,
        timeout: Duration,
    ) -> Result<RunSummary, ClientError> {
        let started = tokio::time::Instant::now();
        loop {
            let summary = self.run(run_id).await?;
            if !matches!(summary.job, JobStatus::Running { .. }) {
                return Ok(summary);
            }
            if started.elapsed() >= timeout {
                return Err(ClientError::Timeout {
                    run_id: run_id.to_string(),
                    waited: timeout,
                });
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn trace(&self, run_id: &str) -> Result<Vec<TimestepRecord>, ClientError> {
        self.get(&format!("/runs/{run_id}/trace")).await
    }

    pub async fn trace_csv(&self, run_id: &str) -> Result<String, ClientError> {
        let url = self.url(&format!("/runs/{run_id}/trace"));
        self.text(url.clone(), self.http.get(&url).header(ACCEPT, "text/csv")).await
    }

    pub async fn annotations_csv(&self, run_id: &str) -> Result<String, ClientError> {
        let url = self.url(&format!("/runs/{run_id}/annotations"));
        self.text(url.clone(), self.http.get(&url)).await
    }
}
