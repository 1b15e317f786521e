//! Finite Markov chains of any size: validation, ergodicity and stationary
//! distributions.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Row sums must be within this of 1.
pub const ROW_TOLERANCE: f64 = 1e-9;

const STATIONARY_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1_000_000;

/// Row-stochastic `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    n: usize,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErgodicityReport {
    pub ergodic: bool,
    pub irreducible: bool,
    /// gcd of cycle lengths through the support graph; 0 when reducible.
    pub period: usize,
    pub diagnostic: String,
}

impl Chain {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::bad_config("chain needs at least one state"));
        }
        let mut p = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::bad_config(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::bad_config(format!("row {i} sums to {sum}, not 1")));
            }
            // rows already stochastic up to rounding are kept bit-exact
            if (sum - 1.0).abs() <= 1e-12 {
                p.extend_from_slice(row);
            } else {
                p.extend(row.iter().map(|x| x / sum));
            }
        }
        Ok(Chain { n, p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.p[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.p[from * self.n..(from + 1) * self.n]
    }

    /// Draws a successor of `from` by inverse CDF on one uniform.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        sample_index(self.row(from), rng.random::<f64>())
    }

    pub fn ergodicity(&self) -> ErgodicityReport {
        let n = self.n;
        let adj = |u: usize| (0..n).filter(move |&v| self.get(u, v) > 0.0);

        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    let edge = if forward { self.get(u, v) } else { self.get(v, u) };
                    if edge > 0.0 && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen
        };
        let fwd = reach(true);
        let bwd = reach(false);
        if let Some(bad) = (0..n).find(|&v| !(fwd[v] && bwd[v])) {
            return ErgodicityReport {
                ergodic: false,
                irreducible: false,
                period: 0,
                diagnostic: format!("state {bad} is not mutually reachable with state 0 (reducible)"),
            };
        }

        // BFS levels; the period is the gcd of level[u] + 1 - level[v] over all edges.
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in adj(u) {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0usize;
        for u in 0..n {
            for v in adj(u) {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
                g = gcd(g, diff);
            }
        }
        let aperiodic = g == 1;
        ErgodicityReport {
            ergodic: aperiodic,
            irreducible: true,
            period: g,
            diagnostic: if aperiodic {
                "irreducible and aperiodic".into()
            } else {
                format!("irreducible but periodic with period {g}")
            },
        }
    }

    pub fn is_ergodic(&self) -> bool {
        self.ergodicity().ergodic
    }

    /// Stationary distribution by power iteration from the uniform vector.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let report = self.ergodicity();
        if !report.ergodic {
            return Err(Error::NotErgodic(report.diagnostic));
        }
        let n = self.n;
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..POWER_MAX_ITERS {
            self.left_multiply(&pi, &mut next);
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= s);
            let delta = pi
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut pi, &mut next);
            if delta <= 1e-15 {
                break;
            }
        }
        let residual = self.stationary_residual(&pi);
        if residual > STATIONARY_TOL {
            return Err(Error::NotErgodic(format!(
                "power iteration did not converge (residual {residual:e})"
            )));
        }
        Ok(pi)
    }

    /// `max_j |(P^T pi)_j - pi_j|`.
    pub fn stationary_residual(&self, pi: &[f64]) -> f64 {
        let mut out = vec![0.0; self.n];
        self.left_multiply(pi, &mut out);
        out.iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..self.n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.p[i * self.n + j];
            }
        }
    }
}

/// Inverse-CDF draw from a discrete distribution given one uniform in `[0, 1)`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the cumulative sum
    last_positive
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_balance() {
        let c = Chain::new(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        let pi = c.stationary().unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_state_chain_is_ergodic() {
        let c = Chain::new(&[vec![1.0]]).unwrap();
        assert!(c.is_ergodic());
        assert_eq!(c.stationary().unwrap(), vec![1.0]);
    }

    #[test]
    fn periodic_and_reducible() {
        let cyc = Chain::new(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let r = cyc.ergodicity();
        assert!(r.irreducible && !r.ergodic);
        assert_eq!(r.period, 4);
        assert!(matches!(cyc.stationary(), Err(Error::NotErgodic(_))));

        let blocks = Chain::new(&[
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        assert!(!blocks.ergodicity().irreducible);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Chain::new(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(Chain::new(&[vec![1.0, 0.0]]).is_err());
        assert!(Chain::new(&[]).is_err());
    }

    #[test]
    fn sample_index_handles_rounding() {
        assert_eq!(sample_index(&[0.0, 0.5, 0.5], 0.0), 1);
        assert_eq!(sample_index(&[0.3, 0.7, 0.0], 0.9999999999999999), 1);
        assert_eq!(sample_index(&[0.3, 0.7], 0.3), 1);
    }
}
