//! Async HTTP clients for answer generation and entailment scoring.
//!
//! Clones of a handle share one in-flight limit.

use std::sync::Arc;
use std::time::Duration;

use futures::future::try_join_all;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use xcheck_core::{EntailmentMatrix, MatrixKind};

use crate::cache::{CacheKey, MatrixCache};
use crate::endpoint::{Backoff, EndpointConfig};
use crate::error::{IoError, Result};

/// Largest pair batch sent in one entailment request.
pub const MAX_ENTAIL_BATCH: usize = 256;

#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    cfg: Arc<EndpointConfig>,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
    backoff: Backoff,
}

enum Failure {
    Retryable(String),
    Fatal(IoError),
}

impl HttpEndpoint {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| IoError::Config(e.to_string()))?;
        Ok(Self {
            permits: Arc::new(Semaphore::new(cfg.max_in_flight)),
            cfg: Arc::new(cfg),
            http,
            backoff: Backoff::default(),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// `GET /healthz`; any 2xx counts as healthy.
    pub async fn healthz(&self) -> Result<()> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let resp = self
            .authorized(self.http.get(self.cfg.url("healthz")))?
            .send()
            .await
            .map_err(|e| IoError::Transport {
                attempts: 1,
                message: e.to_string(),
            })?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(IoError::Transport {
                attempts: 1,
                message: format!("healthz returned {}", resp.status()),
            })
        }
    }

    fn authorized(&self, req: reqwest::RequestBuilder) -> Result<reqwest::RequestBuilder> {
        Ok(match self.cfg.api_key()? {
            Some(key) => req.bearer_auth(key),
            None => req,
        })
    }

    /// POSTs `body` as JSON, retrying connection failures, timeouts, 408,
    /// 429 and 5xx with jittered exponential backoff.
    pub async fn post_json<B, R>(&self, path: &str, body: &B) -> Result<R>
    where
        B: Serialize + ?Sized,
        R: DeserializeOwned,
    {
        let url = self.cfg.url(path);
        let attempts = self.cfg.attempts();
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(&url, body).await {
                Ok(bytes) => {
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| IoError::MalformedResponse(format!("{url}: {e}")));
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
            if attempt + 1 < attempts {
                let delay = self.backoff.delay(attempt, &mut rand::rng());
                tokio::time::sleep(delay).await;
            }
        }
        Err(IoError::Transport {
            attempts,
            message: format!("{url}: {last}"),
        })
    }

    async fn attempt<B: Serialize + ?Sized>(&self, url: &str, body: &B) -> std::result::Result<Vec<u8>, Failure> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let req = self.authorized(self.http.post(url).json(body)).map_err(Failure::Fatal)?;
        let resp = req.send().await.map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_success() {
            return Ok(bytes.to_vec());
        }
        let msg = format!("status {status}: {}", String::from_utf8_lossy(&bytes));
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            Err(Failure::Retryable(msg))
        } else {
            Err(Failure::Fatal(IoError::Transport {
                attempts: 1,
                message: format!("{url}: {msg}"),
            }))
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    n: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct GenerationClient {
    endpoint: HttpEndpoint,
}

impl GenerationClient {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }

    /// Exactly `n` answers. Providers that return fewer choices than asked
    /// are queried again for the remainder.
    pub async fn sample_answers(&self, question: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(IoError::Config(format!("temperature {temperature} must be non-negative")));
        }
        let mut answers = Vec::with_capacity(n);
        while answers.len() < n {
            let want = n - answers.len();
            let body = ChatRequest {
                model: &self.endpoint.cfg.model_id,
                messages: [ChatMessage {
                    role: "user",
                    content: question,
                }],
                temperature,
                n: want,
            };
            let resp: ChatResponse = self.endpoint.post_json("v1/chat/completions", &body).await?;
            if resp.choices.is_empty() {
                return Err(IoError::MalformedResponse("no choices in completion".into()));
            }
            for (i, choice) in resp.choices.into_iter().take(want).enumerate() {
                let text = choice
                    .message
                    .content
                    .ok_or_else(|| IoError::MalformedResponse(format!("choice {i} has no content")))?;
                answers.push(text);
            }
        }
        Ok(answers)
    }
}

#[derive(Serialize)]
struct EntailRequest<'a> {
    pairs: &'a [(String, String)],
}

#[derive(Deserialize)]
struct EntailResponse {
    scores: Vec<f64>,
}

/// Client for the `/entail` contract: `{"pairs": [[premise, hypothesis], ...]}`
/// answered by `{"scores": [...]}`.
#[derive(Debug, Clone)]
pub struct EntailClient {
    endpoint: HttpEndpoint,
}

impl EntailClient {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }

    /// Scores in pair order. Batches run concurrently under the endpoint's
    /// in-flight limit.
    pub async fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let batches = pairs.chunks(MAX_ENTAIL_BATCH).enumerate().map(|(b, chunk)| async move {
            let resp: EntailResponse = self.endpoint.post_json("entail", &EntailRequest { pairs: chunk }).await?;
            if resp.scores.len() != chunk.len() {
                return Err(IoError::MalformedResponse(format!(
                    "{} scores for {} pairs",
                    resp.scores.len(),
                    chunk.len()
                )));
            }
            let offset = b * MAX_ENTAIL_BATCH;
            if let Some((i, &v)) = resp.scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(IoError::Range {
                    index: offset + i,
                    value: v,
                });
            }
            Ok(resp.scores)
        });
        Ok(try_join_all(batches).await?.concat())
    }

    /// `cols = None` builds the self matrix: unit diagonal, `m(m−1)` scored
    /// pairs. Otherwise entry `(j, k)` scores `rows[j] ⇒ cols[k]`. Cache hits
    /// issue no requests.
    pub async fn entail_matrix(
        &self,
        rows: &[String],
        cols: Option<&[String]>,
        cache: Option<&MatrixCache>,
    ) -> Result<EntailmentMatrix> {
        let m = rows.len();
        if m < 2 {
            return Err(xcheck_core::Error::Shape { rows: m, cols: m }.into());
        }
        if let Some(c) = cols {
            if c.len() != m {
                return Err(xcheck_core::Error::Shape { rows: m, cols: c.len() }.into());
            }
        }
        let key = CacheKey::new(rows, cols, &self.endpoint.cfg.model_id);
        if let Some(hit) = cache.and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
        let (kind, pairs, cells) = match cols {
            None => {
                let cells: Vec<(usize, usize)> =
                    (0..m).flat_map(|j| (0..m).filter(move |&k| k != j).map(move |k| (j, k))).collect();
                let pairs: Vec<(String, String)> = cells.iter().map(|&(j, k)| (rows[j].clone(), rows[k].clone())).collect();
                (MatrixKind::SelfTarget, pairs, cells)
            }
            Some(cols) => {
                let cells: Vec<(usize, usize)> = (0..m).flat_map(|j| (0..m).map(move |k| (j, k))).collect();
                let pairs: Vec<(String, String)> = cells.iter().map(|&(j, k)| (rows[j].clone(), cols[k].clone())).collect();
                (MatrixKind::CrossTargetVerifier, pairs, cells)
            }
        };
        let scores: Vec<f64> = self.score_pairs(&pairs).await?;
        let mut grid = vec![vec![1.0; m]; m];
        for (&(j, k), s) in cells.iter().zip(scores) {
            grid[j][k] = s;
        }
        let matrix = EntailmentMatrix::validate(&grid, kind)?;
        if let Some(c) = cache {
            c.put(&key, &matrix)?;
        }
        Ok(matrix)
    }
}
