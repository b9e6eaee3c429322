use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key; empty for none.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_retries() -> usize {
    3
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: String::new(),
            max_in_flight: default_max_in_flight(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.trim().is_empty() {
            return Err(IoError::Config("base_url is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(IoError::Config("max_in_flight must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(IoError::Config("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    /// `{base_url}/{path}` with exactly one slash between them.
    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    /// Reads the key from the environment on every call.
    pub fn api_key(&self) -> Result<Option<String>> {
        if self.api_key_env.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.api_key_env)
            .map(Some)
            .map_err(|_| IoError::MissingApiKey(self.api_key_env.clone()))
    }

    pub fn attempts(&self) -> usize {
        self.retries + 1
    }
}

/// Exponential backoff: retry `k` (0-based) sleeps a uniform draw from
/// `[d/2, d]` with `d = base · factor^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            factor: 2.0,
        }
    }
}

impl Backoff {
    pub fn ceiling(&self, retry: usize) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }

    pub fn delay(&self, retry: usize, rng: &mut impl Rng) -> Duration {
        self.ceiling(retry).mul_f64(rng.random_range(0.5..=1.0))
    }
}
