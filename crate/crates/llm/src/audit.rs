use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::transport::Usage;

/// Hex SHA-256 of the JSON encoding of `[system, user]`.
pub fn prompt_key(system: Option<&str>, user: &str) -> String {
    let canon = serde_json::to_string(&(system, user)).expect("strings always encode");
    hex::encode(Sha256::digest(canon.as_bytes()))
}

/// One completed request/response pair, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub key: String,
    pub system: Option<String>,
    pub user: String,
    pub response: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default = "one")]
    pub attempts: u32,
}

fn one() -> u32 {
    1
}

/// Append-only JSONL sink shared by all workers.
pub struct AuditLog {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog {
            path,
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, ex: &ChatExchange) -> Result<()> {
        let line = serde_json::to_string(ex).expect("exchange always encodes");
        let mut out = self.out.lock().expect("audit log lock");
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(())
    }
}
