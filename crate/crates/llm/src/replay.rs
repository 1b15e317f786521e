use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::audit::{prompt_key, ChatExchange};
use crate::client::ChatCompletion;
use crate::error::{ClientError, Result};

/// Serves completions from an audit log. Lookups are exact matches on the
/// prompt key; if a prompt was logged more than once the first entry wins.
#[derive(Debug, Default, Clone)]
pub struct ReplayClient {
    entries: HashMap<String, ChatExchange>,
}

impl ReplayClient {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: ChatExchange = serde_json::from_str(&line).map_err(|e| ClientError::Log {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            // keys are recomputed so a hand-edited log cannot drift
            let key = prompt_key(ex.system.as_deref(), &ex.user);
            entries.entry(key).or_insert(ex);
        }
        Ok(ReplayClient { entries })
    }

    pub fn from_exchanges(exchanges: impl IntoIterator<Item = ChatExchange>) -> Self {
        let mut entries = HashMap::new();
        for ex in exchanges {
            entries.entry(prompt_key(ex.system.as_deref(), &ex.user)).or_insert(ex);
        }
        ReplayClient { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatCompletion for ReplayClient {
    fn complete(&self, system: Option<&str>, user: &str) -> Result<ChatExchange> {
        let key = prompt_key(system, user);
        match self.entries.get(&key) {
            Some(ex) => Ok(ChatExchange {
                key,
                latency_ms: 0,
                ..ex.clone()
            }),
            None => Err(ClientError::ReplayMiss { key }),
        }
    }
}
