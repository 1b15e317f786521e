use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;

use crate::audit::{prompt_key, AuditLog, ChatExchange};
use crate::config::ClientConfig;
use crate::error::{ClientError, Result};
use crate::transport::{ChatRequest, HttpTransport, Transport};

/// Anything that turns a prompt into a completion. Implemented by the live
/// client and by the replay client, so pipelines cannot tell them apart.
pub trait ChatCompletion: Send + Sync {
    fn complete(&self, system: Option<&str>, user: &str) -> Result<ChatExchange>;
}

impl<C: ChatCompletion + ?Sized> ChatCompletion for &C {
    fn complete(&self, system: Option<&str>, user: &str) -> Result<ChatExchange> {
        (**self).complete(system, user)
    }
}

impl<C: ChatCompletion + ?Sized> ChatCompletion for Box<C> {
    fn complete(&self, system: Option<&str>, user: &str) -> Result<ChatExchange> {
        (**self).complete(system, user)
    }
}

/// Counting semaphore bounding simultaneous transport calls.
struct Budget {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Budget);

impl Budget {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("budget lock");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("budget lock");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("budget lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct ChatClient<T = HttpTransport> {
    config: ClientConfig,
    transport: T,
    budget: Budget,
    audit: Option<AuditLog>,
}

impl ChatClient<HttpTransport> {
    pub fn http(config: ClientConfig) -> Result<Self> {
        let transport = HttpTransport::new(&config)?;
        Self::new(config, transport)
    }
}

impl<T: Transport> ChatClient<T> {
    pub fn new(config: ClientConfig, transport: T) -> Result<Self> {
        config.validate()?;
        Ok(ChatClient {
            budget: Budget {
                used: Mutex::new(0),
                freed: Condvar::new(),
                limit: config.max_in_flight,
            },
            config,
            transport,
            audit: None,
        })
    }

    /// Appends every successful exchange to `log`.
    pub fn with_audit(mut self, log: AuditLog) -> Self {
        self.audit = Some(log);
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn jittered(&self, retry: u32) -> Duration {
        let cap = self.config.backoff_cap(retry);
        if cap.is_zero() {
            return cap;
        }
        cap.mul_f64(rand::rng().random_range(0.5..=1.0))
    }
}

impl<T: Transport> ChatCompletion for ChatClient<T> {
    fn complete(&self, system: Option<&str>, user: &str) -> Result<ChatExchange> {
        let req = ChatRequest::new(&self.config, system, user);
        let started = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.jittered(attempt - 1));
            }
            // the permit is released before any backoff sleep
            let outcome = {
                let _permit = self.budget.acquire();
                self.transport.send(&req)
            };
            match outcome {
                Ok(resp) => {
                    let ex = ChatExchange {
                        key: prompt_key(system, user),
                        system: system.map(str::to_string),
                        user: user.to_string(),
                        response: resp.content,
                        usage: resp.usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                    };
                    if let Some(log) = &self.audit {
                        log.record(&ex)?;
                    }
                    return Ok(ex);
                }
                Err(e) if e.retryable() => last = e.to_string(),
                Err(crate::transport::TransportError::Status { code, body }) => {
                    return Err(ClientError::Rejected { status: code, body })
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(ClientError::Exhausted { attempts, last })
    }
}
