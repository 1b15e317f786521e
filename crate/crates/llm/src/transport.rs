//! Wire layer: one HTTP round trip per call, no retries.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ClientConfig;
use crate::error::{ClientError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

/// Chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(cfg: &ClientConfig, system: Option<&str>, user: &str) -> Self {
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = system {
            messages.push(Message {
                role: "system",
                content: s.to_string(),
            });
        }
        messages.push(Message {
            role: "user",
            content: user.to_string(),
        });
        ChatRequest {
            model: cfg.model.clone(),
            messages,
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            max_tokens: cfg.max_tokens,
        }
    }

    pub fn user(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Status { code: u16, body: String },
    /// Connection failures, timeouts and unreadable bodies.
    Network(String),
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Network(_) => true,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            TransportError::Network(m) => write!(f, "{m}"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, TransportError>;
}

/// Pulls `choices[0].message.content` and token usage out of a response body.
pub fn parse_response(body: &str) -> std::result::Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(body).map_err(|e| TransportError::Network(format!("bad JSON body: {e}")))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| TransportError::Network("response has no choices[0].message.content".into()))?
        .to_string();
    let usage = serde_json::from_value(v["usage"].clone()).unwrap_or_default();
    Ok(ChatResponse { content, usage })
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &ClientConfig) -> Result<Self> {
        if cfg.model.trim().is_empty() {
            return Err(ClientError::Config("a model name is required".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport {
            agent,
            url: cfg.endpoint(),
            api_key: cfg.api_key.clone(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(req).map_err(|e| TransportError::Network(e.to_string()))?;
        let code = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(TransportError::Status { code, body });
        }
        parse_response(&body)
    }
}

/// One scripted outcome of a mock call.
#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    Status(u16),
    NetworkError,
}

type Responder = dyn Fn(&ChatRequest) -> MockReply + Send + Sync;

/// In-process transport for tests. Replies come from a script, then from an
/// optional responder; it records call counts and peak concurrency.
pub struct MockTransport {
    script: Mutex<VecDeque<MockReply>>,
    responder: Option<Box<Responder>>,
    delay: Duration,
    calls: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl MockTransport {
    pub fn scripted(replies: impl IntoIterator<Item = MockReply>) -> Self {
        MockTransport {
            script: Mutex::new(replies.into_iter().collect()),
            responder: None,
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn responder(f: impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static) -> Self {
        MockTransport {
            responder: Some(Box::new(f)),
            ..Self::scripted([])
        }
    }

    pub fn always(reply: MockReply) -> Self {
        Self::responder(move |_| reply.clone())
    }

    /// Each call sleeps this long, which makes overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn send(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let scripted = self.script.lock().expect("mock script").pop_front();
        let reply = match (scripted, &self.responder) {
            (Some(r), _) => r,
            (None, Some(f)) => f(req),
            (None, None) => MockReply::NetworkError,
        };
        self.active.fetch_sub(1, Ordering::SeqCst);
        match reply {
            MockReply::Text(content) => Ok(ChatResponse {
                usage: Usage {
                    prompt_tokens: req.user().split_whitespace().count() as u64,
                    completion_tokens: content.split_whitespace().count() as u64,
                    total_tokens: 0,
                },
                content,
            }),
            MockReply::Status(code) => Err(TransportError::Status {
                code,
                body: "mock status".into(),
            }),
            MockReply::NetworkError => Err(TransportError::Network("mock network failure".into())),
        }
    }
}
