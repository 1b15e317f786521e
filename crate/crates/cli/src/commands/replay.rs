use std::collections::HashSet;

use anyhow::anyhow;
use cotmol_llm::{prompt_key, ChatExchange, ReplayClient};
use serde::Serialize;

use crate::args::ReplayArgs;
use crate::context::{CmdResult, Ctx, Outcome, Payload, Table};

#[derive(Serialize, Default)]
struct LogReport {
    entries: usize,
    unique_prompts: usize,
    duplicate_prompts: usize,
    /// Records whose stored key differs from the recomputed one.
    key_mismatches: usize,
    retried_calls: usize,
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub fn replay(ctx: &mut Ctx, a: &ReplayArgs) -> CmdResult<Outcome> {
    let path = ctx.input(&a.log)?;
    // same parser the replay client uses
    ReplayClient::open(path)?;
    let text = std::fs::read_to_string(path)?;
    let mut r = LogReport::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ex: ChatExchange =
            serde_json::from_str(line).map_err(|e| anyhow!("{}: line {}: {e}", path.display(), i + 1))?;
        let key = prompt_key(ex.system.as_deref(), &ex.user);
        r.entries += 1;
        if key != ex.key {
            r.key_mismatches += 1;
        }
        if !seen.insert(key) {
            r.duplicate_prompts += 1;
        }
        if ex.attempts > 1 {
            r.retried_calls += 1;
        }
        r.prompt_tokens += ex.usage.prompt_tokens;
        r.completion_tokens += ex.usage.completion_tokens;
    }
    r.unique_prompts = seen.len();
    let mut t = Table::new(&["metric", "value"]);
    for (k, v) in [
        ("entries", r.entries as u64),
        ("unique_prompts", r.unique_prompts as u64),
        ("duplicate_prompts", r.duplicate_prompts as u64),
        ("key_mismatches", r.key_mismatches as u64),
        ("retried_calls", r.retried_calls as u64),
        ("prompt_tokens", r.prompt_tokens),
        ("completion_tokens", r.completion_tokens),
    ] {
        t.push(vec![k.into(), v.to_string()]);
    }
    let summary = format!(
        "{} entries, {} unique prompts, {} key mismatches",
        r.entries, r.unique_prompts, r.key_mismatches
    );
    Ok(Outcome {
        primary: Payload::report(&r, Some(t))?,
        extras: vec![],
        summary,
    })
}
