use serde::Serialize;

use super::{euclidean, ClusterSet};
use crate::error::{Error, Result};
use crate::trace::{BehaviorLabel, LabeledTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldOptions {
    /// Also count the edge's own source step as history for the return
    /// distance. Off by default: only steps strictly before the source count.
    pub include_source: bool,
    /// Hop limit used for the "deep edge stays close" aggregate.
    pub max_hops: usize,
}

impl Default for FoldOptions {
    fn default() -> Self {
        FoldOptions {
            include_source: false,
            max_hops: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeFold {
    pub edge: usize,
    pub label: BehaviorLabel,
    /// Step length `|h[t+1] - h[t]|`.
    pub d: f64,
    /// Closest return distance to earlier steps; `None` without history.
    pub r: Option<f64>,
    pub r_argmin: Option<usize>,
    pub reconnects: bool,
    /// Cluster-graph hops; `None` when the clusters are disconnected.
    pub g: Option<usize>,
    pub novelty: f64,
}

/// Per-edge folding statistics of one trace.
pub fn folding_metrics(
    labeled: &LabeledTrace,
    emb: &[Vec<f64>],
    clusters: &ClusterSet,
    opts: FoldOptions,
) -> Result<Vec<EdgeFold>> {
    let steps = labeled.trace().len();
    if emb.len() != steps {
        return Err(Error::shape(format!(
            "{} embeddings for a trace of {steps} steps",
            emb.len()
        )));
    }
    if clusters.assignment.len() != steps {
        return Err(Error::shape(format!(
            "cluster assignment covers {} points, trace has {steps} steps",
            clusters.assignment.len()
        )));
    }
    let mut out = Vec::with_capacity(steps.saturating_sub(1));
    for (t, &label) in labeled.labels().iter().enumerate() {
        let next = &emb[t + 1];
        let d = euclidean(next, &emb[t]);
        let history = if opts.include_source { t + 1 } else { t };
        let mut best: Option<(usize, f64)> = None;
        for (s, h) in emb.iter().enumerate().take(history) {
            let dist = euclidean(next, h);
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((s, dist));
            }
        }
        let (ca, cb) = (clusters.assignment[t], clusters.assignment[t + 1]);
        out.push(EdgeFold {
            edge: t,
            label,
            d,
            r: best.map(|b| b.1),
            r_argmin: best.map(|b| b.0),
            reconnects: best.is_some_and(|(_, r)| r < clusters.alpha),
            g: clusters.hops(ca, cb),
            novelty: d,
        });
    }
    Ok(out)
}

/// Corpus-level shares over the per-edge records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub reflect_edges: usize,
    /// Share of reflection edges that reconnect.
    pub reflect_reconnect_share: Option<f64>,
    pub deep_edges: usize,
    /// Share of deep edges whose endpoints are fewer than `max_hops` apart.
    pub deep_close_share: Option<f64>,
    /// Share of deep edges with `d < g < max_hops`.
    pub deep_banded_share: Option<f64>,
    pub explore_edges: usize,
    pub explore_mean_d: Option<f64>,
}

pub fn summarize(edges: &[EdgeFold], max_hops: usize) -> FoldSummary {
    let of = |b: BehaviorLabel| edges.iter().filter(move |e| e.label == b);
    let share = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);

    let reflect = of(BehaviorLabel::Reflect).count();
    let reconnect = of(BehaviorLabel::Reflect).filter(|e| e.reconnects).count();
    let deep = of(BehaviorLabel::Deep).count();
    let close = of(BehaviorLabel::Deep)
        .filter(|e| e.g.is_some_and(|g| g < max_hops))
        .count();
    let banded = of(BehaviorLabel::Deep)
        .filter(|e| e.g.is_some_and(|g| e.d < g as f64 && g < max_hops))
        .count();
    let explore: Vec<f64> = of(BehaviorLabel::Explore).map(|e| e.d).collect();

    FoldSummary {
        reflect_edges: reflect,
        reflect_reconnect_share: share(reconnect, reflect),
        deep_edges: deep,
        deep_close_share: share(close, deep),
        deep_banded_share: share(banded, deep),
        explore_edges: explore.len(),
        explore_mean_d: (!explore.is_empty()).then(|| explore.iter().sum::<f64>() / explore.len() as f64),
    }
}
