use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{ClientError, Result};

pub const ENV_API_KEY: &str = "COTMOL_API_KEY";
pub const ENV_BASE_URL: &str = "COTMOL_BASE_URL";

/// Sampling and transport settings. Config-file keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry waits about this long; each further retry doubles it.
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
    /// Bearer token; never written to config snapshots.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: String::new(),
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 16384,
            timeout_secs: 600.0,
            max_retries: 3,
            max_in_flight: 8,
            backoff_initial_ms: 500,
            backoff_max_ms: 30_000,
            api_key: None,
        }
    }
}

impl ClientConfig {
    /// Overrides the base URL and API key from `COTMOL_BASE_URL` and
    /// `COTMOL_API_KEY` when set.
    pub fn with_env(self) -> Self {
        self.with_vars(|k| std::env::var(k).ok())
    }

    pub fn with_vars(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(url) = lookup(ENV_BASE_URL).filter(|s| !s.trim().is_empty()) {
            self.base_url = url;
        }
        if let Some(key) = lookup(ENV_API_KEY).filter(|s| !s.trim().is_empty()) {
            self.api_key = Some(key);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ClientError::Config(m));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive".into());
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad(format!("timeout_secs {} must be positive", self.timeout_secs));
        }
        if self.backoff_initial_ms > self.backoff_max_ms {
            return bad("backoff_initial_ms exceeds backoff_max_ms".into());
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Upper bound of the wait before retry number `retry` (1-based).
    pub fn backoff_cap(&self, retry: u32) -> Duration {
        let ms = self
            .backoff_initial_ms
            .saturating_mul(1u64 << (retry.saturating_sub(1)).min(32))
            .min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}
