#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use xcheck_io::{Backoff, EndpointConfig, HttpEndpoint};

/// Deterministic entailment score used by the mock provider.
pub fn mock_score(premise: &str, hypothesis: &str) -> f64 {
    if premise == hypothesis {
        return 0.97;
    }
    let h = premise
        .bytes()
        .chain([0xff])
        .chain(hypothesis.bytes())
        .fold(1469598103934665603u64, |h, b| (h ^ b as u64).wrapping_mul(1099511628211));
    (h % 1001) as f64 / 1000.0
}

/// Deterministic completion text for choice `i` of a request.
pub fn mock_answer(model: &str, question: &str, temperature: f64, i: usize) -> String {
    format!("{model}|{question}|{temperature}|{i}")
}

#[derive(Clone, Default)]
pub struct MockConfig {
    pub delay_ms: u64,
    pub fail_status: Option<u16>,
    pub choice_cap: Option<usize>,
    pub bad_score: Option<f64>,
    pub garbage: bool,
}

#[derive(Default)]
pub struct MockState {
    pub cfg: MockConfig,
    pub chat_requests: AtomicUsize,
    pub entail_requests: AtomicUsize,
    pub pairs_scored: AtomicUsize,
    pub max_batch: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub high_water: AtomicUsize,
    pub chat_bodies: Mutex<Vec<Value>>,
    pub auth_headers: Mutex<Vec<Option<String>>>,
}

impl MockState {
    pub fn requests(&self) -> usize {
        self.chat_requests.load(Ordering::SeqCst) + self.entail_requests.load(Ordering::SeqCst)
    }
}

struct InFlight<'a>(&'a MockState);

impl<'a> InFlight<'a> {
    fn enter(s: &'a MockState) -> Self {
        let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        s.high_water.fetch_max(now, Ordering::SeqCst);
        Self(s)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn record_auth(s: &MockState, headers: &HeaderMap) {
    let value = headers
        .get("authorization")
        .map(|v| v.to_str().unwrap_or_default().to_string());
    s.auth_headers.lock().unwrap().push(value);
}

async fn chat(State(s): State<Arc<MockState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&s);
    s.chat_requests.fetch_add(1, Ordering::SeqCst);
    record_auth(&s, &headers);
    s.chat_bodies.lock().unwrap().push(body.clone());
    tokio::time::sleep(Duration::from_millis(s.cfg.delay_ms)).await;
    if let Some(code) = s.cfg.fail_status {
        return (StatusCode::from_u16(code).unwrap(), "failure").into_response();
    }
    if s.cfg.garbage {
        return (StatusCode::OK, "not json").into_response();
    }
    let model = body["model"].as_str().unwrap_or_default();
    let question = body["messages"][0]["content"].as_str().unwrap_or_default();
    let temperature = body["temperature"].as_f64().unwrap_or(f64::NAN);
    let n = body["n"].as_u64().unwrap_or(1) as usize;
    let n = s.cfg.choice_cap.map_or(n, |c| n.min(c));
    let done = s.chat_bodies.lock().unwrap().len();
    let choices: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "index": i,
                "message": {"role": "assistant", "content": mock_answer(model, question, temperature, done * 1000 + i)}
            })
        })
        .collect();
    Json(json!({"id": "cmpl", "object": "chat.completion", "choices": choices})).into_response()
}

async fn entail(State(s): State<Arc<MockState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&s);
    s.entail_requests.fetch_add(1, Ordering::SeqCst);
    record_auth(&s, &headers);
    tokio::time::sleep(Duration::from_millis(s.cfg.delay_ms)).await;
    if let Some(code) = s.cfg.fail_status {
        return (StatusCode::from_u16(code).unwrap(), "failure").into_response();
    }
    if s.cfg.garbage {
        return Json(json!({"unexpected": true})).into_response();
    }
    let Some(pairs) = body["pairs"].as_array() else {
        return (StatusCode::BAD_REQUEST, "pairs missing").into_response();
    };
    if pairs.is_empty() {
        return (StatusCode::BAD_REQUEST, "empty").into_response();
    }
    if pairs.len() > 256 {
        return (StatusCode::PAYLOAD_TOO_LARGE, "batch too large").into_response();
    }
    s.max_batch.fetch_max(pairs.len(), Ordering::SeqCst);
    s.pairs_scored.fetch_add(pairs.len(), Ordering::SeqCst);
    let mut scores: Vec<f64> = pairs
        .iter()
        .map(|p| mock_score(p[0].as_str().unwrap_or_default(), p[1].as_str().unwrap_or_default()))
        .collect();
    if let Some(bad) = s.cfg.bad_score {
        scores[0] = bad;
    }
    Json(json!({"scores": scores, "model_id": "mock-nli"})).into_response()
}

async fn healthz() -> Json<Value> {
    Json(json!({"model_id": "mock-nli", "ready": true}))
}

pub struct Mock {
    pub base_url: String,
    pub state: Arc<MockState>,
}

pub async fn spawn(cfg: MockConfig) -> Mock {
    let state = Arc::new(MockState {
        cfg,
        ..Default::default()
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/entail", post(entail))
        .route("/healthz", get(healthz))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Mock {
        base_url: format!("http://{addr}"),
        state,
    }
}

pub fn fast_backoff() -> Backoff {
    Backoff {
        base: Duration::from_millis(5),
        factor: 2.0,
    }
}

pub fn endpoint(base_url: &str, max_in_flight: usize, retries: usize) -> HttpEndpoint {
    let cfg = EndpointConfig {
        max_in_flight,
        retries,
        timeout_ms: 5_000,
        ..EndpointConfig::new(base_url, "mock-model")
    };
    HttpEndpoint::new(cfg).unwrap().with_backoff(fast_backoff())
}

pub fn texts(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix} answer {i}")).collect()
}
