//! Chat-completions client used by the annotation and synthesis pipelines.
//!
//! All remote calls go through [`ChatCompletion`]. The live [`ChatClient`]
//! adds retries with jittered exponential backoff, a cap on simultaneous
//! requests and an optional JSONL audit log; [`ReplayClient`] answers from
//! such a log without touching the network.

pub mod adapters;
pub mod audit;
pub mod client;
pub mod config;
pub mod error;
pub mod replay;
pub mod transport;

pub use adapters::{LlmClassifier, LlmGenerator};
pub use audit::{prompt_key, AuditLog, ChatExchange};
pub use client::{ChatClient, ChatCompletion};
pub use config::ClientConfig;
pub use error::{ClientError, Result};
pub use replay::ReplayClient;
pub use transport::{HttpTransport, MockReply, MockTransport, Transport, TransportError, Usage};
