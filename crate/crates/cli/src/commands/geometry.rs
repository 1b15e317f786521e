use std::collections::HashMap;

use anyhow::{anyhow, Context as _};
use cotmol_core::geometry::{
    adaptive_alpha, cluster_with_beta, folding_metrics, meb, phase_trajectory, read_embeddings, summarize, tsne_reduce,
    volume, volume_delta, Ball, EdgeFold, EmbeddingSequence, FoldOptions, FoldSummary, PhaseState, PhaseTrajectory,
    TsneConfig, VolumeChange,
};
use serde::{Deserialize, Serialize};

use super::common::{labeled_corpus, parse_f64};
use crate::args::{Direction, FoldArgs, MebArgs, PhaseArgs, Reduce, ReduceArgs};
use crate::context::{cell, opt_cell, usage, CmdResult, Ctx, Outcome, Payload, Table};

fn check_reduce(r: &ReduceArgs) -> CmdResult<()> {
    if r.reduce == Reduce::Tsne && !(2..=3).contains(&r.tsne_dim) {
        return usage("--tsne-dim must be 2 or 3");
    }
    if r.perplexity.is_some_and(|p| !(p > 0.0)) {
        return usage("--perplexity must be positive");
    }
    if !(r.early_exaggeration > 0.0) {
        return usage("--early-exaggeration must be positive");
    }
    Ok(())
}

/// Reduces all sequences jointly, so distances are comparable across traces.
fn reduce(ctx: &mut Ctx, seqs: &[&EmbeddingSequence], r: &ReduceArgs) -> CmdResult<Vec<Vec<Vec<f64>>>> {
    if r.reduce == Reduce::None {
        return Ok(seqs.iter().map(|s| s.vectors.clone()).collect());
    }
    let stacked: Vec<Vec<f64>> = seqs.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
    let cfg = TsneConfig {
        dim: r.tsne_dim,
        iters: r.tsne_iters,
        early_exaggeration: r.early_exaggeration,
        perplexity: r.perplexity,
        seed: ctx.task_seed("tsne"),
        ..TsneConfig::default()
    };
    let res = tsne_reduce(&stacked, &cfg).context("t-SNE reduction failed")?;
    let mut it = res.points.into_iter();
    Ok(seqs.iter().map(|s| it.by_ref().take(s.vectors.len()).collect()).collect())
}

#[derive(Serialize)]
struct TraceFold {
    trace_id: String,
    alpha: f64,
    n_clusters: usize,
    edges: Vec<EdgeFold>,
}

#[derive(Serialize)]
struct FoldReport {
    summary: FoldSummary,
    traces: Vec<TraceFold>,
}

pub fn fold(ctx: &mut Ctx, a: &FoldArgs) -> CmdResult<Outcome> {
    check_reduce(&a.reduce)?;
    let fixed_alpha = match a.alpha.trim() {
        "auto" => None,
        s => {
            let v = parse_f64("--alpha", s)?;
            if v <= 0.0 {
                return usage("--alpha must be positive");
            }
            Some(v)
        }
    };
    if !(a.beta_factor >= 1.0) {
        return usage("--beta-factor must be at least 1");
    }
    let corpus = labeled_corpus(ctx, &a.labeled)?;
    let embs = read_embeddings(ctx.input(&a.embeddings)?)?;
    let by_id: HashMap<&str, &EmbeddingSequence> = embs.iter().map(|e| (e.trace_id.as_str(), e)).collect();
    let mut seqs = Vec::with_capacity(corpus.len());
    for lt in &corpus {
        let e = by_id
            .get(lt.trace().id())
            .ok_or_else(|| anyhow!("no embeddings for trace {:?}", lt.trace().id()))?;
        if e.vectors.len() != lt.trace().len() {
            return Err(anyhow!(
                "trace {:?} has {} steps but {} embeddings",
                lt.trace().id(),
                lt.trace().len(),
                e.vectors.len()
            )
            .into());
        }
        seqs.push(*e);
    }
    let points = reduce(ctx, &seqs, &a.reduce)?;
    let opts = FoldOptions {
        include_source: a.include_source,
        max_hops: a.max_hops,
    };
    let mut traces = Vec::with_capacity(corpus.len());
    for (lt, pts) in corpus.iter().zip(&points) {
        let alpha = match fixed_alpha {
            Some(v) => v,
            None => {
                let aa = adaptive_alpha(pts)?;
                if aa.degenerate {
                    return Err(anyhow!(
                        "adaptive threshold for {:?} is zero; pass --alpha explicitly",
                        lt.trace().id()
                    )
                    .into());
                }
                aa.value
            }
        };
        let cs = cluster_with_beta(pts, alpha, a.beta_factor * alpha)?;
        let edges = folding_metrics(lt, pts, &cs, opts)?;
        traces.push(TraceFold {
            trace_id: lt.trace().id().to_string(),
            alpha,
            n_clusters: cs.n_clusters,
            edges,
        });
    }
    let all: Vec<EdgeFold> = traces.iter().flat_map(|t| t.edges.iter().cloned()).collect();
    let summary = summarize(&all, a.max_hops);
    let mut t = Table::new(&["trace_id", "edge", "label", "d", "r", "r_argmin", "reconnects", "g", "novelty"]);
    for tr in &traces {
        for e in &tr.edges {
            t.push(vec![
                tr.trace_id.clone(),
                e.edge.to_string(),
                e.label.code().into(),
                cell(e.d),
                opt_cell(e.r),
                e.r_argmin.map(|x| x.to_string()).unwrap_or_default(),
                e.reconnects.to_string(),
                e.g.map(|x| x.to_string()).unwrap_or_default(),
                cell(e.novelty),
            ]);
        }
    }
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
    let line = format!(
        "{} edges; reflection reconnects {}, deep within {} hops {}",
        all.len(),
        pct(summary.reflect_reconnect_share),
        a.max_hops,
        pct(summary.deep_close_share)
    );
    Ok(Outcome {
        primary: Payload::report(&FoldReport { summary, traces }, Some(t))?,
        extras: vec![],
        summary: line,
    })
}

#[derive(Serialize)]
struct TraceBall {
    trace_id: String,
    steps: usize,
    dim: usize,
    ball: Ball,
    volume: f64,
}

#[derive(Serialize)]
struct MebReport {
    traces: Vec<TraceBall>,
    mean_volume: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    direction: Option<Direction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_percent: Option<f64>,
}

pub fn meb_cmd(ctx: &mut Ctx, a: &MebArgs) -> CmdResult<Outcome> {
    check_reduce(&a.reduce)?;
    if a.baseline_volume.is_some_and(|v| !(v > 0.0)) {
        return usage("--baseline-volume must be positive");
    }
    let embs = read_embeddings(ctx.input(&a.embeddings)?)?;
    if embs.is_empty() {
        return Err(anyhow!("{} contains no embeddings", a.embeddings.display()).into());
    }
    if a.reduce.reduce == Reduce::None {
        if let Some(bad) = embs.iter().find(|e| !(2..=3).contains(&e.dim())) {
            return usage(format!(
                "volumes need 2 or 3 dimensions but {:?} has {}; use --reduce tsne",
                bad.trace_id,
                bad.dim()
            ));
        }
    }
    let refs: Vec<&EmbeddingSequence> = embs.iter().collect();
    let points = reduce(ctx, &refs, &a.reduce)?;
    let seed = ctx.task_seed("meb");
    let mut traces = Vec::with_capacity(embs.len());
    for (e, pts) in embs.iter().zip(&points) {
        let dim = pts[0].len();
        let ball = meb(pts, seed)?;
        let v = volume(&ball, dim)?;
        traces.push(TraceBall {
            trace_id: e.trace_id.clone(),
            steps: pts.len(),
            dim,
            ball,
            volume: v,
        });
    }
    let mean_volume = traces.iter().map(|t| t.volume).sum::<f64>() / traces.len() as f64;
    let delta_percent = match a.baseline_volume {
        Some(base) => Some(volume_delta(
            base,
            mean_volume,
            match a.direction {
                Direction::Reduction => VolumeChange::Reduction,
                Direction::Expansion => VolumeChange::Expansion,
            },
        )?),
        None => None,
    };
    let mut t = Table::new(&["trace_id", "steps", "radius", "volume"]);
    for tb in &traces {
        t.push(vec![tb.trace_id.clone(), tb.steps.to_string(), cell(tb.ball.radius), cell(tb.volume)]);
    }
    let mut line = format!("{} traces, mean volume {:.4}", traces.len(), mean_volume);
    if let Some(d) = delta_percent {
        line.push_str(&format!(", change {d:.2}%"));
    }
    let r = MebReport {
        traces,
        mean_volume,
        baseline_volume: a.baseline_volume,
        direction: a.baseline_volume.map(|_| a.direction),
        delta_percent,
    };
    Ok(Outcome {
        primary: Payload::report(&r, Some(t))?,
        extras: vec![],
        summary: line,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InfoRecord {
    trace_id: String,
    info: Vec<f64>,
}

#[derive(Serialize)]
struct StateCounts {
    exploration: usize,
    validation: usize,
    neutral: usize,
    /// Switches between exploration and validation, neutral moves skipped.
    oscillations: usize,
}

#[derive(Serialize)]
struct TracePhase {
    trace_id: String,
    trajectory: PhaseTrajectory,
    counts: StateCounts,
}

fn counts(states: &[PhaseState]) -> StateCounts {
    let n = |s: PhaseState| states.iter().filter(|x| **x == s).count();
    let polar: Vec<PhaseState> = states.iter().copied().filter(|s| *s != PhaseState::Neutral).collect();
    StateCounts {
        exploration: n(PhaseState::Exploration),
        validation: n(PhaseState::Validation),
        neutral: n(PhaseState::Neutral),
        oscillations: polar.windows(2).filter(|w| w[0] != w[1]).count(),
    }
}

fn state_name(s: PhaseState) -> &'static str {
    match s {
        PhaseState::Exploration => "exploration",
        PhaseState::Validation => "validation",
        PhaseState::Neutral => "neutral",
    }
}

pub fn phase(ctx: &mut Ctx, a: &PhaseArgs) -> CmdResult<Outcome> {
    let text = std::fs::read_to_string(ctx.input(&a.input)?)?;
    let mut traces = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: InfoRecord = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}", a.input.display(), i + 1))?;
        let trajectory =
            phase_trajectory(&rec.info).with_context(|| format!("trace {:?}", rec.trace_id))?;
        traces.push(TracePhase {
            trace_id: rec.trace_id,
            counts: counts(&trajectory.states),
            trajectory,
        });
    }
    if traces.is_empty() {
        return Err(anyhow!("{} has no records", a.input.display()).into());
    }
    let mut t = Table::new(&["trace_id", "k", "info_from", "info_to", "d_info", "slope", "state"]);
    for tp in &traces {
        let tr = &tp.trajectory;
        for k in 0..tr.d_info.len() {
            t.push(vec![
                tp.trace_id.clone(),
                k.to_string(),
                cell(tr.info[k]),
                cell(tr.info[k + 1]),
                cell(tr.d_info[k]),
                opt_cell(tr.slope[k]),
                state_name(tr.states[k]).into(),
            ]);
        }
    }
    let osc: usize = traces.iter().map(|t| t.counts.oscillations).sum();
    let line = format!("{} trajectories, {osc} oscillations", traces.len());
    Ok(Outcome {
        primary: Payload::report(&traces, Some(t))?,
        extras: vec![],
        summary: line,
    })
}
