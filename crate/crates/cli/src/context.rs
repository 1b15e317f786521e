use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use cotmol_core::report;
use cotmol_core::{seed, Exec};
use cotmol_llm::ClientConfig;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::{Format, Global};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Failure class, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation: exit code 2.
    Usage(String),
    /// The inputs or the analysis failed: exit code 1.
    Domain(anyhow::Error),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Domain(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

pub fn usage<T>(msg: impl Into<String>) -> CmdResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Rows for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub enum Payload {
    /// Structured report; CSV output uses the table.
    Report { json: Value, table: Option<Table> },
    /// Pre-serialized JSONL records.
    Lines(Vec<u8>),
}

impl Payload {
    pub fn report<T: Serialize + ?Sized>(v: &T, table: Option<Table>) -> CmdResult<Self> {
        Ok(Payload::Report {
            json: report::to_value(v)?,
            table,
        })
    }
}

/// Everything a command produces; nothing is written until it returns.
pub struct Outcome {
    pub primary: Payload,
    /// Extra files written next to the primary one as `<stem>.<suffix>`.
    pub extras: Vec<(String, Payload)>,
    /// One-line summary for stderr.
    pub summary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub exec: Exec,
    pub effective_seeds: BTreeMap<String, u64>,
    pub arguments: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client: Option<ClientConfig>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub struct Ctx {
    pub global: Global,
    pub exec: Exec,
    pub argv: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub client: Option<ClientConfig>,
    /// Files created during the run (audit logs), listed in the manifest.
    pub side_outputs: Vec<PathBuf>,
    started: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn has_extension(p: &Path) -> bool {
    p.extension().is_some()
}

impl Ctx {
    pub fn new(global: Global, argv: Vec<String>) -> Self {
        let exec = if global.jobs == 1 {
            Exec::Sequential
        } else {
            Exec::default()
        };
        Ctx {
            global,
            exec,
            argv,
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            client: None,
            side_outputs: Vec::new(),
            started: now_ms(),
        }
    }

    /// Records the digest of an input file and returns its path.
    pub fn input<'a>(&mut self, path: &'a Path) -> CmdResult<&'a Path> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let rec = InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        };
        if !self.inputs.iter().any(|i| i.path == rec.path) {
            self.inputs.push(rec);
        }
        Ok(path)
    }

    /// Seed for a named task, recorded in the manifest.
    pub fn task_seed(&mut self, task: &str) -> u64 {
        let s = seed::derive(self.global.seed, task, 0);
        self.seeds.insert(task.to_string(), s);
        s
    }

    /// Master seed handed to a routine that derives its own sub-seeds.
    pub fn master_seed(&mut self, task: &str) -> u64 {
        self.seeds.insert(task.to_string(), self.global.seed);
        self.global.seed
    }

    pub fn workers(&self) -> usize {
        match self.global.jobs {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            j => j,
        }
    }

    /// Directory and file name of the primary output.
    pub fn primary_path(&self, default_name: &str) -> PathBuf {
        match &self.global.out {
            None => PathBuf::from("cotmol-out").join(default_name),
            Some(p) if p.is_dir() || !has_extension(p) => p.join(default_name),
            Some(p) => p.clone(),
        }
    }

    pub fn out_dir(&self, default_name: &str) -> PathBuf {
        let p = self.primary_path(default_name);
        match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }

    fn format_for(&self, path: &Path) -> Format {
        self.global.format.unwrap_or_else(|| {
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                Format::Csv
            } else {
                Format::Json
            }
        })
    }

    /// Writes the outcome and the manifest. `default_name` has no extension.
    pub fn finish(
        mut self,
        default_stem: &str,
        default_ext: &str,
        outcome: Outcome,
        command: &str,
        arguments: Value,
    ) -> CmdResult<()> {
        let ext = match (&outcome.primary, self.global.format) {
            (Payload::Report { .. }, Some(Format::Csv)) => "csv",
            _ => default_ext,
        };
        let primary = self.primary_path(&format!("{default_stem}.{ext}"));
        let dir = self.out_dir(&format!("{default_stem}.{ext}"));
        let stem = primary
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| default_stem.to_string());

        // render everything before touching the file system
        let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
        files.push((primary.clone(), self.render(&primary, outcome.primary)?));
        for (suffix, payload) in outcome.extras {
            let p = dir.join(format!("{stem}.{suffix}"));
            files.push((p.clone(), self.render(&p, payload)?));
        }

        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (p, bytes) in &files {
            std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
        }
        let mut outputs: Vec<String> = files
            .iter()
            .map(|(p, _)| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        outputs.extend(self.side_outputs.iter().map(|p| p.display().to_string()));
        let manifest = RunManifest {
            tool: "cotmol",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::mem::take(&mut self.argv),
            seed: self.global.seed,
            jobs: self.global.jobs,
            exec: self.exec,
            effective_seeds: std::mem::take(&mut self.seeds),
            arguments,
            client: self.client.take(),
            inputs: std::mem::take(&mut self.inputs),
            outputs,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
        };
        report::write_json(dir.join(MANIFEST_NAME), &manifest)?;
        if !self.global.quiet {
            eprintln!("{}", outcome.summary);
            eprintln!("wrote {}", primary.display());
        }
        Ok(())
    }

    fn render(&self, path: &Path, payload: Payload) -> CmdResult<Vec<u8>> {
        match payload {
            Payload::Lines(b) => Ok(b),
            Payload::Report { json, table } => match self.format_for(path) {
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&json)?;
                    s.push('\n');
                    Ok(s.into_bytes())
                }
                Format::Csv => {
                    let Some(t) = table else {
                        return usage(format!("{} has no CSV form; use JSON", path.display()));
                    };
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(&t.header)?;
                    for r in &t.rows {
                        w.write_record(r)?;
                    }
                    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
                }
            },
        }
    }
}

/// JSONL bytes of already-rounded rows.
pub fn jsonl<T: Serialize>(rows: &[T]) -> CmdResult<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, &report::to_value(r)?)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn cell(x: f64) -> String {
    report::cell(Some(x))
}

pub fn opt_cell(x: Option<f64>) -> String {
    report::cell(x)
}
