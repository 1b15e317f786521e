use std::collections::HashMap;

use anyhow::anyhow;
use cotmol_core::annotate::{annotate_corpus, macro_f1};
use cotmol_core::synth::{apply_keyword_plan, find_keywords, summarization_prompt, KeywordTable, PlanId};
use cotmol_core::trace::{extract_boxed, read_corpus, read_labeled_corpus, write_corpus_to, CorpusEntry, DEFAULT_DELIMITERS};
use cotmol_core::{BehaviorLabel, Trace};
use cotmol_core::synth::Generator;
use cotmol_llm::{LlmClassifier, LlmGenerator};

use super::common::{chat, par_map};
use crate::args::{AnnotateArgs, KeywordArgs, SegmentArgs, SummarizeArgs};
use crate::context::{usage, CmdResult, Ctx, Outcome, Payload};

fn corpus_bytes(entries: &[CorpusEntry]) -> CmdResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_corpus_to(entries, &mut buf)?;
    Ok(buf)
}

fn unescape(s: &str) -> String {
    s.replace("\\n", "\n").replace("\\t", "\t")
}

pub fn segment(ctx: &mut Ctx, a: &SegmentArgs) -> CmdResult<Outcome> {
    let delims: Vec<String> = match &a.delimiters {
        Some(d) => d.iter().map(|s| unescape(s)).collect(),
        None => DEFAULT_DELIMITERS.iter().map(|s| s.to_string()).collect(),
    };
    if delims.iter().any(String::is_empty) {
        return usage("empty delimiter");
    }
    let refs: Vec<&str> = delims.iter().map(String::as_str).collect();
    let entries = read_corpus(ctx.input(&a.input)?, &refs)?;
    let steps: usize = entries.iter().map(|e| e.trace.len()).sum();
    Ok(Outcome {
        primary: Payload::Lines(corpus_bytes(&entries)?),
        extras: vec![],
        summary: format!("{} traces, {steps} steps", entries.len()),
    })
}

pub fn annotate(ctx: &mut Ctx, a: &AnnotateArgs) -> CmdResult<Outcome> {
    let entries = read_corpus(ctx.input(&a.input)?, &DEFAULT_DELIMITERS)?;
    if let Some(short) = entries.iter().find(|e| e.trace.len() < 2) {
        return Err(anyhow!("trace {:?} has a single step and no edge to label", short.trace.id()).into());
    }
    let gold: Option<HashMap<String, Vec<BehaviorLabel>>> = match &a.gold {
        Some(p) => {
            let g = read_labeled_corpus(ctx.input(p)?)?;
            Some(g.into_iter().map(|lt| {
                let (t, l) = lt.into_parts();
                (t.id().to_string(), l)
            }).collect())
        }
        None => None,
    };
    if let Some(g) = &gold {
        for e in &entries {
            if let Some(labels) = g.get(e.trace.id()) {
                if labels.len() + 1 != e.trace.len() {
                    return Err(anyhow!("gold labels for {:?} do not match its {} steps", e.trace.id(), e.trace.len()).into());
                }
            }
        }
        if !entries.iter().any(|e| g.contains_key(e.trace.id())) {
            return Err(anyhow!("the gold corpus shares no trace ids with the input").into());
        }
    }
    let traces: Vec<Trace> = entries.into_iter().map(|e| e.trace).collect();
    let (client, workers) = chat(ctx, &a.client, "labeled.jsonl")?;
    let classifier = LlmClassifier::new(client);
    let labeled = annotate_corpus(&traces, &classifier, workers)?;

    let mut extras = vec![];
    let mut summary = format!("labeled {} traces", labeled.len());
    if let Some(g) = &gold {
        let (mut pred, mut want) = (Vec::new(), Vec::new());
        for lt in &labeled {
            if let Some(gl) = g.get(lt.trace().id()) {
                pred.extend_from_slice(lt.labels());
                want.extend_from_slice(gl);
            }
        }
        let report = macro_f1(&pred, &want)?;
        summary.push_str(&format!(", macro-F1 {:.4} on {} edges", report.macro_f1, pred.len()));
        extras.push(("agreement.json".to_string(), Payload::report(&report, None)?));
    }
    let out: Vec<CorpusEntry> = labeled.into_iter().map(CorpusEntry::from).collect();
    Ok(Outcome {
        primary: Payload::Lines(corpus_bytes(&out)?),
        extras,
        summary,
    })
}

pub fn keywords(ctx: &mut Ctx, a: &KeywordArgs) -> CmdResult<Outcome> {
    let plan: PlanId = match a.plan.parse() {
        Ok(p) => p,
        Err(e) => return usage(format!("{e}")),
    };
    let table = match &a.table {
        Some(p) => KeywordTable::parse_tsv(&std::fs::read_to_string(ctx.input(p)?)?)?,
        None => KeywordTable::builtin(),
    };
    let entries = read_corpus(ctx.input(&a.input)?, &DEFAULT_DELIMITERS)?;
    let mut hits = 0;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        hits += e.trace.step_texts().map(|s| find_keywords(s, &table).len()).sum::<usize>();
        out.push(CorpusEntry {
            trace: apply_keyword_plan(&e.trace, &table, plan)?,
            labels: e.labels,
        });
    }
    Ok(Outcome {
        primary: Payload::Lines(corpus_bytes(&out)?),
        extras: vec![],
        summary: format!("{plan}: rewrote {hits} keyword occurrences in {} traces", out.len()),
    })
}

pub fn summarize(ctx: &mut Ctx, a: &SummarizeArgs) -> CmdResult<Outcome> {
    let entries = read_corpus(ctx.input(&a.input)?, &DEFAULT_DELIMITERS)?;
    let (client, workers) = chat(ctx, &a.client, "summarized.jsonl")?;
    let gen = LlmGenerator::new(client);
    let results = par_map(entries.len(), workers, |i| {
        let t = &entries[i].trace;
        gen.generate(&summarization_prompt(t))
    });
    let mut out = Vec::with_capacity(entries.len());
    for (e, r) in entries.iter().zip(results) {
        let text = r.map_err(|err| anyhow!("summarizing {:?} failed: {err}", e.trace.id()))?;
        let answer = extract_boxed(&text)
            .ok()
            .flatten()
            .or_else(|| e.trace.final_answer().map(str::to_string));
        let t = Trace::from_text(e.trace.id(), e.trace.query(), &text, &DEFAULT_DELIMITERS, answer)
            .map_err(|err| anyhow!("summary of {:?} is unusable: {err}", e.trace.id()))?;
        out.push(CorpusEntry::from(t));
    }
    let before: usize = entries.iter().map(|e| e.trace.len()).sum();
    let after: usize = out.iter().map(|e| e.trace.len()).sum();
    Ok(Outcome {
        primary: Payload::Lines(corpus_bytes(&out)?),
        extras: vec![],
        summary: format!("summarized {} traces: {before} steps -> {after}", out.len()),
    })
}
