use anyhow::{anyhow, Context as _};
use cotmol_core::synth::{override_transition, synthesize_batch, SynthesisConfig, Termination};
use cotmol_core::BehaviorLabel;
use cotmol_llm::LlmGenerator;
use serde_json::Value;

use super::common::{chat, load_graph, parse_f64};
use crate::args::SynthArgs;
use crate::context::{jsonl, usage, CmdResult, Ctx, Outcome, Payload};

/// Smoothing applied when the target graph is estimated from a corpus, so
/// that unseen rows still define a walk.
const SYNTH_SMOOTHING: f64 = 0.5;

fn parse_override(s: &str) -> CmdResult<(BehaviorLabel, f64)> {
    let Some((b, p)) = s.split_once('=') else {
        return usage(format!("--override expects BEHAVIOR=P, got {s:?}"));
    };
    let b: BehaviorLabel = match b.parse() {
        Ok(b) => b,
        Err(e) => return usage(e.to_string()),
    };
    let p = parse_f64("--override", p)?;
    if !(0.0..=1.0).contains(&p) {
        return usage(format!("--override probability {p} outside [0, 1]"));
    }
    Ok((b, p))
}

fn read_questions(text: &str, path: &std::path::Path) -> CmdResult<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        let q = match &v {
            Value::String(s) => s.clone(),
            Value::Object(o) => match o.get("question").or_else(|| o.get("query")) {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(anyhow!("{}: line {}: no \"question\" string", path.display(), i + 1).into()),
            },
            _ => return Err(anyhow!("{}: line {}: expected a string or object", path.display(), i + 1).into()),
        };
        out.push(q);
    }
    if out.is_empty() {
        return Err(anyhow!("{} has no questions", path.display()).into());
    }
    Ok(out)
}

pub fn synth(ctx: &mut Ctx, a: &SynthArgs) -> CmdResult<Outcome> {
    if a.max_steps == 0 {
        return usage("--max-steps must be at least 1");
    }
    let start: BehaviorLabel = match a.start.parse() {
        Ok(b) => b,
        Err(e) => return usage(e.to_string()),
    };
    let forced = a.override_.as_deref().map(parse_override).transpose()?;
    let (mut p, _) = load_graph(ctx, &a.graph, SYNTH_SMOOTHING)?;
    if let Some((b, prob)) = forced {
        p = override_transition(&p, b, prob)?;
    }
    let questions = read_questions(&std::fs::read_to_string(ctx.input(&a.questions)?)?, &a.questions)?;
    let cfg = SynthesisConfig {
        start,
        stop_on_boxed: !a.no_stop,
        rationale_window: a.window,
        ..SynthesisConfig::new(p, a.max_steps, ctx.master_seed("synth"))
    };
    let (client, workers) = chat(ctx, &a.client, "synthetic.jsonl")?;
    let gen = LlmGenerator::new(client);
    let traces = synthesize_batch(&questions, &cfg, &gen, workers)?;
    let count = |t: Termination| traces.iter().filter(|x| x.terminated_by == t).count();
    let summary = format!(
        "{} traces: {} answered, {} hit max steps, {} client failures",
        traces.len(),
        count(Termination::Boxed),
        count(Termination::MaxSteps),
        count(Termination::ClientFailure)
    );
    Ok(Outcome {
        primary: Payload::Lines(jsonl(&traces)?),
        extras: vec![],
        summary,
    })
}
