#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use triage_core::corpus::Corpus;
use triage_core::synth::{synthetic_corpus, SynthConfig};
use triage_service::{open_state, AppState};

pub fn corpora() -> HashMap<String, Corpus> {
    let corpus = synthetic_corpus(&SynthConfig { reports: 400, seed: 3, ..SynthConfig::default() });
    HashMap::from([("synth".to_string(), corpus)])
}

pub fn app(dir: &std::path::Path) -> (Router, Arc<AppState>) {
    let state = open_state(dir, corpora()).unwrap();
    (triage_service::router(state.clone()), state)
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap_or_default().to_string()
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, accept: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(a) = accept {
        req = req.header(header::ACCEPT, a);
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply { status, content_type, text: String::from_utf8(bytes.to_vec()).unwrap() }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None, None).await
}

pub async fn post_json(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, "POST", uri, Some(body), None).await
}

pub async fn create_run(app: &Router, config: Value) -> String {
    let r = post_json(app, "/runs", json!({ "corpus": "synth", "config": config })).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    r.json()["run_id"].as_str().unwrap().to_string()
}

pub async fn queue_ids(app: &Router, run: &str) -> Vec<String> {
    get(app, &format!("/runs/{run}/queue")).await.json()["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["id"].as_str().unwrap().to_string())
        .collect()
}

pub async fn label_all(app: &Router, run: &str) {
    for id in queue_ids(app, run).await {
        let r = post_json(
            app,
            &format!("/runs/{run}/labels"),
            json!({ "report_id": id, "label": "bug", "readability_rating": 1, "elapsed_ms": 900, "labeler": "p1" }),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    }
}

/// Polls the run summary until its advance job leaves the running state.
pub async fn wait_job(app: &Router, run: &str) -> Value {
    for _ in 0..600 {
        let s = get(app, &format!("/runs/{run}")).await.json();
        if s["job"]["status"] != "running" {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("advance job did not finish");
}

/// A stand-in model server: keyword-based probabilities, 4-dim embeddings,
/// and an optional delay on every update.
#[derive(Clone, Default)]
pub struct FakeModel {
    pub version: Arc<AtomicU64>,
    pub update_delay_ms: Arc<AtomicU64>,
}

fn featurize(text: &str) -> Vec<f64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let has = |list: &[&str]| words.iter().filter(|w| list.contains(w)).count() as f64;
    vec![
        has(triage_core::textmetrics::RELEVANT_TERMS),
        has(triage_core::textmetrics::IRRELEVANT_TERMS),
        words.len() as f64 / 10.0,
        1.0,
    ]
}

async fn update(State(m): State<FakeModel>, Json(_): Json<Value>) -> Json<Value> {
    let delay = m.update_delay_ms.load(Ordering::SeqCst);
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    let v = m.version.fetch_add(1, Ordering::SeqCst) + 1;
    Json(json!({ "status": "ok", "version": v }))
}

async fn predict(Json(body): Json<Value>) -> Json<Value> {
    let probs: Vec<[f64; 2]> = body["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let f = featurize(t.as_str().unwrap());
            let p = (1.0 + f[0]) / (2.0 + f[0] + f[1]);
            [p, 1.0 - p]
        })
        .collect();
    Json(json!({ "probs": probs }))
}

async fn embed(Json(body): Json<Value>) -> Json<Value> {
    let vectors: Vec<Vec<f64>> = body["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| featurize(t.as_str().unwrap()))
        .collect();
    Json(json!({ "dim": 4, "vectors": vectors }))
}

/// Starts the fake model server on an ephemeral port; returns its base URL.
pub async fn spawn_fake_model(model: FakeModel) -> (String, tokio::task::JoinHandle<()>) {
    let app = Router::new()
        .route("/v1/update", post(update))
        .route("/v1/predict", post(predict))
        .route("/v1/embed", post(embed))
        .with_state(model);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (format!("http://{addr}"), handle)
}
