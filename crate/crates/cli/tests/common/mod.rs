#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cotmol_core::annotate::{build_annotation_prompt, render_verdict};
use cotmol_core::trace::{read_corpus, DEFAULT_DELIMITERS};
use cotmol_core::BehaviorLabel;
use cotmol_llm::{AuditLog, ChatClient, ChatCompletion, ClientConfig, MockReply, MockTransport};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the binary in `dir` with the network pointed at a closed port.
pub fn cotmol(dir: &Path, args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_cotmol"))
        .args(args)
        .current_dir(dir)
        .env("COTMOL_BASE_URL", "http://127.0.0.1:9/v1")
        .env_remove("COTMOL_API_KEY")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn ok(dir: &Path, args: &[&str]) -> Run {
    let r = cotmol(dir, args);
    assert_eq!(r.code, 0, "cotmol {args:?} failed:\n{}", r.stderr);
    r
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(&p, text).unwrap();
    p
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Raw traces whose steps start with behavior cue words.
pub fn raw_corpus() -> String {
    let cues = ["Compute", "Therefore", "Wait", "Alternatively"];
    let mut out = String::new();
    for t in 0..6usize {
        let mut paras = Vec::new();
        for s in 0..(5 + t % 3) {
            let cue = cues[(t * 7 + s * s + s) % 4];
            paras.push(format!("{cue}, step {s} of problem {t} adds {} to the total.", s * t + 1));
        }
        paras.push(format!("So the answer is \\\\boxed{{{}}}.", t * 3));
        let text = paras.join("\\n\\n");
        out.push_str(&format!("{{\"id\":\"p{t}\",\"query\":\"problem {t}\",\"text\":\"{text}\"}}\n"));
    }
    out
}

/// Verdict for an annotation prompt, keyed on the cue word of the current step.
pub fn cue_verdict(prompt: &str) -> String {
    let cur = prompt.rsplit("CURRENT STEP:\n").next().unwrap_or("");
    let label = if cur.starts_with("Therefore") {
        BehaviorLabel::Deep
    } else if cur.starts_with("Wait") {
        BehaviorLabel::Reflect
    } else if cur.starts_with("Alternatively") {
        BehaviorLabel::Explore
    } else {
        BehaviorLabel::Normal
    };
    render_verdict(label)
}

pub fn mock_client(log: Option<&Path>, respond: fn(&str) -> String) -> ChatClient<MockTransport> {
    let cfg = ClientConfig {
        model: "mock".into(),
        backoff_initial_ms: 0,
        backoff_max_ms: 0,
        ..Default::default()
    };
    let c = ChatClient::new(cfg, MockTransport::responder(move |req| MockReply::Text(respond(req.user())))).unwrap();
    match log {
        Some(p) => c.with_audit(AuditLog::append(p).unwrap()),
        None => c,
    }
}

/// Records an audit log answering every annotation prompt of `corpus`.
pub fn record_annotation_log(corpus: &Path, log: &Path) {
    let client = mock_client(Some(log), cue_verdict);
    for e in read_corpus(corpus, &DEFAULT_DELIMITERS).unwrap() {
        let steps: Vec<&str> = e.trace.step_texts().collect();
        for w in steps.windows(2) {
            client.complete(None, &build_annotation_prompt(w[0], w[1])).unwrap();
        }
    }
}

/// Deterministic step embeddings for every trace id, `dim` wide.
pub fn embeddings_for(corpus: &Path, dim: usize) -> String {
    let mut out = String::new();
    for (ti, e) in read_corpus(corpus, &DEFAULT_DELIMITERS).unwrap().iter().enumerate() {
        let vectors: Vec<Vec<f64>> = (0..e.trace.len())
            .map(|s| {
                (0..dim)
                    .map(|k| (((ti * 31 + s * 17 + k * 7) % 23) as f64 / 23.0) + 0.1 * s as f64 + k as f64 * 0.01)
                    .collect()
            })
            .collect();
        out.push_str(&serde_json::json!({"trace_id": e.trace.id(), "vectors": vectors}).to_string());
        out.push('\n');
    }
    out
}

/// Dense CATT bytes for `heads` x `tokens` logits.
pub fn catt(heads: usize, tokens: usize, logits: &[f32]) -> Vec<u8> {
    assert_eq!(logits.len(), heads * tokens * tokens);
    let mut b = b"CATT".to_vec();
    b.extend((heads as u32).to_le_bytes());
    b.extend((tokens as u32).to_le_bytes());
    for x in logits {
        b.extend(x.to_le_bytes());
    }
    b
}

/// All files under `dir`, relative paths, sorted.
pub fn tree(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Manifest JSON without wall-clock fields.
pub fn manifest_without_time(path: &Path) -> serde_json::Value {
    let mut v = read_json(path);
    let o = v.as_object_mut().unwrap();
    o.remove("started_unix_ms");
    o.remove("finished_unix_ms");
    v
}
