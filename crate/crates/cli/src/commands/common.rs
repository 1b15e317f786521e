use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context as _;
use cotmol_core::bondgraph::{estimate_with, MarginalDistribution, TransferGraph, TransitionMatrix};
use cotmol_core::trace::read_labeled_corpus;
use cotmol_core::{BehaviorLabel, LabeledTrace};
use cotmol_llm::{AuditLog, ChatClient, ChatCompletion, ClientConfig, ReplayClient};

use crate::args::ClientArgs;
use crate::context::{usage, CmdResult, Ctx};

pub fn labeled_corpus(ctx: &mut Ctx, path: &Path) -> CmdResult<Vec<LabeledTrace>> {
    let c = read_labeled_corpus(ctx.input(path)?)?;
    if c.is_empty() {
        return Err(anyhow::anyhow!("{} contains no traces", path.display()).into());
    }
    Ok(c)
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

/// A transfer-graph JSON file, or a labeled `.jsonl` corpus estimated with
/// `smoothing`.
pub fn load_graph(
    ctx: &mut Ctx,
    path: &Path,
    smoothing: f64,
) -> CmdResult<(TransitionMatrix, MarginalDistribution)> {
    if is_jsonl(path) {
        let c = labeled_corpus(ctx, path)?;
        return Ok(estimate_with(&c, smoothing, ctx.exec)?);
    }
    let text = std::fs::read_to_string(ctx.input(path)?)?;
    let g: TransferGraph =
        serde_json::from_str(&text).with_context(|| format!("{} is not a transfer graph", path.display()))?;
    Ok((g.matrix()?, g.marginal()?))
}

pub fn behaviors(list: &Option<Vec<String>>) -> CmdResult<Vec<BehaviorLabel>> {
    let Some(list) = list else {
        return Ok(BehaviorLabel::ALL.to_vec());
    };
    let mut out = Vec::new();
    for s in list {
        match s.parse::<BehaviorLabel>() {
            Ok(b) if !out.contains(&b) => out.push(b),
            Ok(_) => {}
            Err(e) => return usage(e.to_string()),
        }
    }
    if out.len() < 2 {
        return usage("--behaviors needs at least two behaviors");
    }
    out.sort();
    Ok(out)
}

pub fn check_smoothing(s: f64) -> CmdResult<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return usage(format!("--smoothing must be a non-negative number, got {s}"));
    }
    Ok(())
}

/// Resolves the client configuration without opening any connection.
pub fn client_config(ctx: &Ctx, args: &ClientArgs) -> CmdResult<ClientConfig> {
    let mut cfg = match &ctx.global.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("bad client config {}", p.display()))?
        }
        None => ClientConfig::default(),
    }
    .with_env();
    if let Some(e) = &args.endpoint {
        cfg.base_url = e.clone();
    }
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if let Some(t) = args.max_tokens {
        cfg.max_tokens = t;
    }
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    if cfg.model.trim().is_empty() {
        return usage("a model is required: pass --model, set it in --config, or use --replay");
    }
    Ok(cfg)
}

/// Live client with an audit log, or the replay client under `--replay`.
/// Returns the client and the number of workers to drive it with.
pub fn chat(
    ctx: &mut Ctx,
    args: &ClientArgs,
    default_name: &str,
) -> CmdResult<(Box<dyn ChatCompletion>, usize)> {
    if let Some(log) = ctx.global.replay.clone() {
        let client = ReplayClient::open(ctx.input(&log)?)?;
        return Ok((Box::new(client), ctx.workers()));
    }
    let cfg = client_config(ctx, args)?;
    let audit: PathBuf = match &args.audit {
        Some(p) => p.clone(),
        None => ctx.out_dir(default_name).join("audit.jsonl"),
    };
    if let Some(d) = audit.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    let client = ChatClient::http(cfg.clone())?.with_audit(AuditLog::append(&audit)?);
    let workers = cfg.max_in_flight;
    ctx.client = Some(cfg);
    ctx.side_outputs.push(audit);
    Ok((Box::new(client), workers))
}

/// Ordered map over `0..n` on `workers` threads pulling from a shared index.
pub fn par_map<R: Send>(n: usize, workers: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every index processed"))
        .collect()
}

pub fn parse_f64(name: &str, s: &str) -> CmdResult<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => usage(format!("{name}: {s:?} is not a number")),
    }
}
