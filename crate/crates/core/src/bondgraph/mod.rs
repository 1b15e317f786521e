//! Transfer graphs: behavior transition matrices, marginals, similarity and
//! sample-size stability.

mod chain;
mod stability;

pub use chain::{sample_index, Chain, ErgodicityReport, ROW_TOLERANCE};
pub use stability::{stability_curve, StabilityConfig, StabilityCurve, StabilityPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::trace::{BehaviorLabel, LabeledTrace};

pub const K: usize = 4;

pub type Counts = [[u64; K]; K];
pub type Probabilities = [[f64; K]; K];

/// `P(b' | b)` over the four behaviors, rows indexed by source.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: Probabilities,
    counts: Counts,
    /// Rows that had no outgoing transitions in the data; kept uniform.
    zero_evidence: [bool; K],
}

impl TransitionMatrix {
    /// Smoothed estimate from pair counts: `(c + s) / (row + 4s)`.
    pub fn from_counts(counts: Counts, smoothing: f64) -> Result<Self> {
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::bad_config(format!("smoothing must be >= 0, got {smoothing}")));
        }
        let mut p = [[0.0; K]; K];
        let mut zero_evidence = [false; K];
        for i in 0..K {
            let row: u64 = counts[i].iter().sum();
            if row == 0 {
                zero_evidence[i] = true;
                p[i] = [1.0 / K as f64; K];
                continue;
            }
            let denom = row as f64 + K as f64 * smoothing;
            for j in 0..K {
                p[i][j] = (counts[i][j] as f64 + smoothing) / denom;
            }
        }
        Ok(TransitionMatrix {
            p,
            counts,
            zero_evidence,
        })
    }

    /// A matrix given directly as probabilities (e.g. a synthesis target).
    pub fn from_probabilities(p: Probabilities) -> Result<Self> {
        let rows: Vec<Vec<f64>> = p.iter().map(|r| r.to_vec()).collect();
        let chain = Chain::new(&rows)?;
        let mut norm = [[0.0; K]; K];
        for (i, row) in norm.iter_mut().enumerate() {
            row.copy_from_slice(chain.row(i));
        }
        Ok(TransitionMatrix {
            p: norm,
            counts: [[0; K]; K],
            zero_evidence: [false; K],
        })
    }

    pub fn uniform() -> Self {
        TransitionMatrix {
            p: [[0.25; K]; K],
            counts: [[0; K]; K],
            zero_evidence: [false; K],
        }
    }

    pub fn p(&self) -> &Probabilities {
        &self.p
    }

    pub fn get(&self, from: BehaviorLabel, to: BehaviorLabel) -> f64 {
        self.p[from.index()][to.index()]
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn zero_evidence(&self) -> [bool; K] {
        self.zero_evidence
    }

    /// Row-major flattening of all 16 entries.
    pub fn flattened(&self) -> Vec<f64> {
        self.p.iter().flatten().copied().collect()
    }

    /// Sub-matrix over `behaviors` with each row renormalized over the kept
    /// columns, flattened row-major. Rows with no mass on the kept columns
    /// become uniform.
    pub fn restricted(&self, behaviors: &[BehaviorLabel]) -> Vec<f64> {
        let m = behaviors.len();
        let mut out = Vec::with_capacity(m * m);
        for &from in behaviors {
            let row: Vec<f64> = behaviors.iter().map(|&to| self.get(from, to)).collect();
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                out.extend(row.iter().map(|x| x / s));
            } else {
                out.extend(std::iter::repeat_n(1.0 / m as f64, m));
            }
        }
        out
    }

    pub fn chain(&self) -> Chain {
        let rows: Vec<Vec<f64>> = self.p.iter().map(|r| r.to_vec()).collect();
        Chain::new(&rows).expect("transition matrix rows are stochastic")
    }

    pub fn ergodicity(&self) -> ErgodicityReport {
        self.chain().ergodicity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalDistribution {
    pub pi: [f64; K],
}

impl MarginalDistribution {
    pub fn new(pi: [f64; K]) -> Result<Self> {
        if pi.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::bad_config("distribution has a negative or non-finite entry"));
        }
        let s: f64 = pi.iter().sum();
        if (s - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::bad_config(format!("distribution sums to {s}, not 1")));
        }
        if (s - 1.0).abs() <= 1e-12 {
            return Ok(MarginalDistribution { pi });
        }
        Ok(MarginalDistribution { pi: pi.map(|x| x / s) })
    }

    pub fn get(&self, b: BehaviorLabel) -> f64 {
        self.pi[b.index()]
    }

    pub fn total_variation(&self, other: &MarginalDistribution) -> f64 {
        total_variation(&self.pi, &other.pi)
    }
}

/// `1/2 * sum |a_i - b_i|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Pair and edge counts of one trace; pairs never cross trace boundaries.
fn tally(trace: &LabeledTrace) -> (Counts, [u64; K]) {
    let mut pairs = [[0u64; K]; K];
    let mut edges = [0u64; K];
    let labels = trace.labels();
    for l in labels {
        edges[l.index()] += 1;
    }
    for w in labels.windows(2) {
        pairs[w[0].index()][w[1].index()] += 1;
    }
    (pairs, edges)
}

pub fn estimate(
    corpus: &[LabeledTrace],
    smoothing: f64,
) -> Result<(TransitionMatrix, MarginalDistribution)> {
    estimate_with(corpus, smoothing, Exec::default())
}

/// Counts consecutive label pairs within each trace and the edge-label
/// marginal over the whole corpus.
pub fn estimate_with(
    corpus: &[LabeledTrace],
    smoothing: f64,
    exec: Exec,
) -> Result<(TransitionMatrix, MarginalDistribution)> {
    let parts = exec.map_slice(corpus, tally);
    let mut counts = [[0u64; K]; K];
    let mut edges = [0u64; K];
    for (c, e) in parts {
        for i in 0..K {
            edges[i] += e[i];
            for j in 0..K {
                counts[i][j] += c[i][j];
            }
        }
    }
    let total_edges: u64 = edges.iter().sum();
    let total_pairs: u64 = counts.iter().flatten().sum();
    if total_edges == 0 || total_pairs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let tm = TransitionMatrix::from_counts(counts, smoothing)?;
    let pi = MarginalDistribution {
        pi: edges.map(|c| c as f64 / total_edges as f64),
    };
    Ok((tm, pi))
}

pub fn stationary(p: &TransitionMatrix) -> Result<MarginalDistribution> {
    let pi = p.chain().stationary()?;
    Ok(MarginalDistribution {
        pi: [pi[0], pi[1], pi[2], pi[3]],
    })
}

pub fn is_ergodic(p: &TransitionMatrix) -> ErgodicityReport {
    p.ergodicity()
}

/// Pearson correlation of the two matrices flattened over all 16 entries.
pub fn pearson(p: &TransitionMatrix, q: &TransitionMatrix) -> Result<f64> {
    pearson_slices(&p.flattened(), &q.flattened())
}

/// Pearson correlation over the sub-matrices restricted to `behaviors`.
pub fn pearson_restricted(
    p: &TransitionMatrix,
    q: &TransitionMatrix,
    behaviors: &[BehaviorLabel],
) -> Result<f64> {
    pearson_slices(&p.restricted(behaviors), &q.restricted(behaviors))
}

pub fn pearson_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.len() < 2 {
        return Err(Error::shape(format!("vectors of length {} and {}", p.len(), q.len())));
    }
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mq = q.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in p.iter().zip(q) {
        let dx = x - mp;
        let dy = y - mq;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = |v: &[f64]| (1e-12 * scale(v)).powi(2) * n;
    if sxx <= floor(p) {
        return Err(Error::DegenerateCorrelation("first vector"));
    }
    if syy <= floor(q) {
        return Err(Error::DegenerateCorrelation("second vector"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Transfer-graph file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferGraph {
    pub labels: Vec<String>,
    pub p: Probabilities,
    pub counts: Counts,
    pub pi: [f64; K],
}

impl TransferGraph {
    pub fn new(p: &TransitionMatrix, pi: &MarginalDistribution) -> Self {
        TransferGraph {
            labels: BehaviorLabel::ALL.iter().map(|l| l.code().to_string()).collect(),
            p: p.p,
            counts: p.counts,
            pi: pi.pi,
        }
    }

    /// Rebuilds the matrix; probabilities are taken as given.
    pub fn matrix(&self) -> Result<TransitionMatrix> {
        let expected: Vec<&str> = BehaviorLabel::ALL.iter().map(|l| l.code()).collect();
        if self.labels != expected {
            return Err(Error::bad_config(format!(
                "transfer graph labels {:?} must be {:?}",
                self.labels, expected
            )));
        }
        let mut m = TransitionMatrix::from_probabilities(self.p)?;
        m.counts = self.counts;
        for i in 0..K {
            m.zero_evidence[i] = self.counts.iter().flatten().any(|&c| c > 0)
                && self.counts[i].iter().all(|&c| c == 0);
        }
        Ok(m)
    }

    pub fn marginal(&self) -> Result<MarginalDistribution> {
        MarginalDistribution::new(self.pi)
    }
}
