//! Soft-min aggregation of path energies over a step DAG.

use std::collections::VecDeque;

use serde::Serialize;

use super::{logsumexp, AttentionRecord, StepSpans};
use crate::error::{Error, Result};

/// Edge-inclusion threshold on mean attention weight. Arbitrary default.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

/// Directed graph over steps; edges point from the attended-to step to the
/// attending step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathGraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl PathGraph {
    pub fn new(nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(u, v, e) in &edges {
            if u >= nodes || v >= nodes {
                return Err(Error::shape(format!("edge {u}->{v} outside {nodes} nodes")));
            }
            if !e.is_finite() {
                return Err(Error::bad_config(format!("edge {u}->{v} has non-finite energy")));
            }
        }
        Ok(PathGraph { nodes, edges })
    }

    fn outgoing(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.nodes];
        for &(u, v, e) in &self.edges {
            out[u].push((v, e));
        }
        out
    }

    /// Kahn order, or `NotADag`.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let mut indeg = vec![0usize; self.nodes];
        for &(_, v, _) in &self.edges {
            indeg[v] += 1;
        }
        let out = self.outgoing();
        let mut q: VecDeque<usize> = (0..self.nodes).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes);
        while let Some(u) = q.pop_front() {
            order.push(u);
            for &(v, _) in &out[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    q.push_back(v);
                }
            }
        }
        if order.len() != self.nodes {
            return Err(Error::NotADag);
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftMin {
    pub e_star: f64,
    /// Number of s->t paths (saturating).
    pub path_count: u128,
    /// Explicit paths with energies, when there are few enough.
    pub paths: Option<Vec<(Vec<usize>, f64)>>,
}

/// `-ln sum_p exp(-E(p))` over all `s -> t` paths, by a log-space pass in
/// topological order. Paths are listed when there are at most
/// `enumerate_limit` of them.
pub fn softmin_energy(g: &PathGraph, s: usize, t: usize, enumerate_limit: usize) -> Result<SoftMin> {
    if s >= g.nodes || t >= g.nodes {
        return Err(Error::shape(format!("endpoints {s}, {t} outside {} nodes", g.nodes)));
    }
    let order = g.topological_order()?;
    let out = g.outgoing();
    // log of summed Gibbs weight of all s->v prefixes
    let mut logw = vec![f64::NEG_INFINITY; g.nodes];
    logw[s] = 0.0;
    let mut incoming: Vec<Vec<f64>> = vec![Vec::new(); g.nodes];
    for &u in &order {
        if !incoming[u].is_empty() {
            let mut terms = std::mem::take(&mut incoming[u]);
            if u == s {
                terms.push(0.0);
            }
            logw[u] = logsumexp(terms);
        }
        if logw[u] == f64::NEG_INFINITY {
            continue;
        }
        for &(v, e) in &out[u] {
            incoming[v].push(logw[u] - e);
        }
    }
    if logw[t] == f64::NEG_INFINITY {
        return Err(Error::NoPath { from: s, to: t });
    }
    let path_count = count_paths(g, s, t)?;
    let paths = (path_count <= enumerate_limit as u128).then(|| enumerate_paths(g, s, t, enumerate_limit));
    Ok(SoftMin {
        e_star: -logw[t],
        path_count,
        paths,
    })
}

pub fn count_paths(g: &PathGraph, s: usize, t: usize) -> Result<u128> {
    let order = g.topological_order()?;
    let out = g.outgoing();
    let mut count = vec![0u128; g.nodes];
    count[s] = 1;
    for &u in &order {
        if count[u] == 0 {
            continue;
        }
        for &(v, _) in &out[u] {
            count[v] = count[v].saturating_add(count[u]);
        }
    }
    Ok(count[t])
}

/// Depth-first listing of up to `limit` paths with their summed energies.
pub fn enumerate_paths(g: &PathGraph, s: usize, t: usize, limit: usize) -> Vec<(Vec<usize>, f64)> {
    let out = g.outgoing();
    let mut found = Vec::new();
    let mut stack = vec![s];
    fn walk(
        out: &[Vec<(usize, f64)>],
        t: usize,
        stack: &mut Vec<usize>,
        energy: f64,
        limit: usize,
        found: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if found.len() >= limit {
            return;
        }
        let u = *stack.last().expect("non-empty path");
        if u == t {
            found.push((stack.clone(), energy));
            return;
        }
        for &(v, e) in &out[u] {
            stack.push(v);
            walk(out, t, stack, energy + e, limit, found);
            stack.pop();
        }
    }
    walk(&out, t, &mut stack, 0.0, limit, &mut found);
    found
}

/// Relative Gibbs weight of a path with energy `e_p` against one with `e_q`.
pub fn gibbs_weight_ratio(e_p: f64, e_q: f64) -> f64 {
    (e_q - e_p).exp()
}

/// Step graph from attention: `u -> v` (u < v) when the mean causal softmax
/// weight from tokens of `v` onto tokens of `u` exceeds `threshold`. Edge
/// energy is the mean token energy over those pairs.
pub fn build_path_graph(attn: &AttentionRecord, spans: &StepSpans, threshold: f64) -> Result<PathGraph> {
    let AttentionRecord::Dense { tokens, .. } = attn else {
        return Err(Error::bad_config("path graphs need dense attention"));
    };
    let tokens = *tokens;
    let steps = spans.0.len();
    spans.validate(steps, Some(tokens))?;
    let heads = attn.heads();
    // head-averaged causal softmax weights and logits per query token
    let mut weight = vec![0.0; tokens * tokens];
    let mut logit = vec![0.0; tokens * tokens];
    for i in 0..tokens {
        for h in 0..heads {
            let row: Vec<f64> = (0..=i)
                .map(|j| {
                    attn.logit(h, i, j)
                        .ok_or_else(|| Error::MissingAttention(format!("head {h}, query {i}, key {j}")))
                })
                .collect::<Result<_>>()?;
            let lse = logsumexp(row.iter().copied());
            for (j, s) in row.iter().enumerate() {
                weight[i * tokens + j] += (s - lse).exp() / heads as f64;
                logit[i * tokens + j] += s / heads as f64;
            }
        }
    }
    let mut edges = Vec::new();
    for v in 0..steps {
        let [vs, ve] = spans.0[v];
        for u in 0..v {
            let [us, ue] = spans.0[u];
            let mut w = 0.0;
            let mut s = 0.0;
            for i in vs..ve {
                for j in us..ue {
                    w += weight[i * tokens + j];
                    s += logit[i * tokens + j];
                }
            }
            let pairs = ((ve - vs) * (ue - us)) as f64;
            if w / pairs > threshold {
                edges.push((u, v, -s / pairs));
            }
        }
    }
    PathGraph::new(steps, edges)
}
