use std::collections::VecDeque;

use serde::Serialize;

use super::euclidean;
use crate::error::{Error, Result};

/// Threshold derived from the spread of pairwise distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveAlpha {
    pub value: f64,
    /// Max and min distinct-pair distances coincide, so `value` is 0 and the
    /// caller has to supply a threshold.
    pub degenerate: bool,
}

pub const ALPHA_FRACTION: f64 = 0.02;

/// `0.02 * (max - min)` over pairwise distances, ignoring exact duplicates
/// for the minimum.
pub fn adaptive_alpha(points: &[Vec<f64>]) -> Result<AdaptiveAlpha> {
    if points.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = euclidean(&points[i], &points[j]);
            max = max.max(d);
            if d > 0.0 {
                min = min.min(d);
            }
        }
    }
    if !min.is_finite() {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    let value = ALPHA_FRACTION * (max - min);
    Ok(AdaptiveAlpha {
        value,
        degenerate: value <= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    /// Cluster id per point, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub alpha: f64,
    /// Threshold on the closest cross pair for two clusters to be adjacent.
    pub beta: f64,
    pub n_clusters: usize,
    /// Undirected edges `(a, b)` with `a < b`.
    pub adjacency: Vec<(usize, usize)>,
}

impl ClusterSet {
    /// Hop count between two clusters on the adjacency graph; `None` when
    /// disconnected.
    pub fn hops(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut nbrs = vec![Vec::new(); self.n_clusters];
        for &(a, b) in &self.adjacency {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut dist = vec![usize::MAX; self.n_clusters];
        dist[from] = 0;
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            for &v in &nbrs[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if v == to {
                        return Some(dist[v]);
                    }
                    q.push_back(v);
                }
            }
        }
        None
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Single-linkage clusters at `alpha` with adjacency at `2 * alpha`.
pub fn cluster(points: &[Vec<f64>], alpha: f64) -> Result<ClusterSet> {
    cluster_with_beta(points, alpha, 2.0 * alpha)
}

pub fn cluster_with_beta(points: &[Vec<f64>], alpha: f64, beta: f64) -> Result<ClusterSet> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::bad_config(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= alpha) {
        return Err(Error::bad_config(format!("adjacency threshold {beta} below alpha {alpha}")));
    }
    let n = points.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if euclidean(&points[i], &points[j]) < alpha {
                uf.union(i, j);
            }
        }
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut assignment = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let r = uf.find(i);
        if id_of_root[r] == usize::MAX {
            id_of_root[r] = next;
            next += 1;
        }
        assignment.push(id_of_root[r]);
    }
    let mut closest = vec![f64::INFINITY; next * next];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (assignment[i], assignment[j]);
            if a != b {
                let d = euclidean(&points[i], &points[j]);
                let (lo, hi) = (a.min(b), a.max(b));
                let slot = &mut closest[lo * next + hi];
                *slot = slot.min(d);
            }
        }
    }
    let mut adjacency = Vec::new();
    for a in 0..next {
        for b in a + 1..next {
            if closest[a * next + b] < beta {
                adjacency.push((a, b));
            }
        }
    }
    Ok(ClusterSet {
        assignment,
        alpha,
        beta,
        n_clusters: next,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_formula() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![51.0, 0.0]];
        let a = adaptive_alpha(&pts).unwrap();
        assert!((a.value - 1.0).abs() < 1e-12);
        assert!(!a.degenerate);

        let two = adaptive_alpha(&[vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        assert_eq!(two.value, 0.0);
        assert!(two.degenerate);

        assert!(adaptive_alpha(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(adaptive_alpha(&[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn transitive_chain_merges() {
        let pts = vec![vec![0.0], vec![0.9], vec![1.8]];
        let c = cluster(&pts, 1.0).unwrap();
        assert_eq!(c.n_clusters, 1);
    }

    #[test]
    fn separated_groups() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![100.0, 0.0], vec![100.1, 0.0]];
        let c = cluster(&pts, 1.0).unwrap();
        assert_eq!(c.assignment, vec![0, 0, 1, 1]);
        assert!(c.adjacency.is_empty());
        assert_eq!(c.hops(0, 1), None);
        assert!(cluster(&pts, 0.0).is_err());
    }

    #[test]
    fn adjacency_hops() {
        // three clusters 1.5 apart: adjacent at beta = 2
        let pts = vec![vec![0.0], vec![1.5], vec![3.0]];
        let c = cluster(&pts, 1.0).unwrap();
        assert_eq!(c.n_clusters, 3);
        assert_eq!(c.adjacency, vec![(0, 1), (1, 2)]);
        assert_eq!(c.hops(0, 2), Some(2));
        assert_eq!(c.hops(1, 1), Some(0));
    }
}
