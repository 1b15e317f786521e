//! Exact t-SNE on cosine input distances.

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub dim: usize,
    pub iters: usize,
    pub early_exaggeration: f64,
    /// Number of leading iterations run with exaggerated affinities.
    pub exaggeration_iters: usize,
    /// `None` picks `min(30, (N - 1) / 3)`.
    pub perplexity: Option<f64>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            dim: 3,
            iters: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            perplexity: None,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsneResult {
    pub points: Vec<Vec<f64>>,
    pub perplexity: f64,
    /// KL(P || Q) at the seeded initialization.
    pub kl_initial: f64,
    /// KL right after the exaggeration phase.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

pub fn max_perplexity(n: usize) -> f64 {
    (n as f64 - 1.0) / 3.0
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        // a zero vector is orthogonal to everything
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
}

pub fn tsne_reduce(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.len();
    if n < 4 {
        return Err(Error::bad_config(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let d_in = x[0].len();
    if x.iter().any(|v| v.len() != d_in) {
        return Err(Error::shape("input vectors differ in dimension"));
    }
    if !(cfg.dim == 2 || cfg.dim == 3) {
        return Err(Error::bad_config(format!("output dimension must be 2 or 3, got {}", cfg.dim)));
    }
    if !(cfg.early_exaggeration > 0.0 && cfg.learning_rate > 0.0) {
        return Err(Error::bad_config("exaggeration and learning rate must be positive"));
    }
    let cap = max_perplexity(n);
    let perplexity = cfg.perplexity.unwrap_or(cap.min(30.0));
    if !(perplexity > 0.0) || perplexity > cap {
        return Err(Error::bad_config(format!(
            "perplexity {perplexity} infeasible for {n} points (max {cap:.4})"
        )));
    }

    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(&x[i], &x[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let p = joint_probabilities(&dist, n, perplexity);

    let dim = cfg.dim;
    let mut rng = seed::task_rng(cfg.seed, "tsne-init", 0);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..n * dim).map(|_| normal.sample(&mut rng)).collect();

    let kl_initial = kl_divergence(&p, &y, n, dim);
    let mut kl_after_exaggeration = kl_initial;
    let mut update = vec![0.0; n * dim];
    let mut gains = vec![1.0f64; n * dim];
    let mut grad = vec![0.0; n * dim];
    let mut w = vec![0.0; n * n];
    let ex_iters = cfg.exaggeration_iters.min(cfg.iters);

    for it in 0..cfg.iters {
        let exaggerating = it < ex_iters;
        let exag = if exaggerating { cfg.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };

        let mut wsum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let mut sq = 0.0;
                for k in 0..dim {
                    let diff = y[i * dim + k] - y[j * dim + k];
                    sq += diff * diff;
                }
                let wij = 1.0 / (1.0 + sq);
                w[i * n + j] = wij;
                w[j * n + i] = wij;
                wsum += 2.0 * wij;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w[i * n + j];
                let coef = 4.0 * (exag * p[i * n + j] - wij / wsum) * wij;
                for k in 0..dim {
                    grad[i * dim + k] += coef * (y[i * dim + k] - y[j * dim + k]);
                }
            }
        }
        for idx in 0..n * dim {
            let flipped = update[idx] * grad[idx] < 0.0;
            gains[idx] = if flipped { gains[idx] + 0.2 } else { gains[idx] * 0.8 };
            gains[idx] = gains[idx].max(0.01);
            update[idx] = momentum * update[idx] - cfg.learning_rate * gains[idx] * grad[idx];
            y[idx] += update[idx];
        }
        if it + 1 == ex_iters {
            kl_after_exaggeration = kl_divergence(&p, &y, n, dim);
        }
    }
    let kl_final = kl_divergence(&p, &y, n, dim);

    Ok(TsneResult {
        points: y.chunks(dim).map(|c| c.to_vec()).collect(),
        perplexity,
        kl_initial,
        kl_after_exaggeration,
        kl_final,
    })
}

/// Symmetrized affinities `(P + P^T) / 2N` from per-point bandwidths found by
/// bisection on the entropy.
fn joint_probabilities(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let di = &dist[i * n..(i + 1) * n];
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| di[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut wd = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(di[j] - dmin) * beta).exp() };
                sum += row[j];
                wd += row[j] * (di[j] - dmin);
            }
            let entropy = sum.ln() + beta * wd / sum;
            let err = entropy - target;
            if err.abs() < 1e-10 {
                break;
            }
            if err > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            cond[i * n + j] = row[j] / sum;
        }
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    p
}

fn kl_divergence(p: &[f64], y: &[f64], n: usize, dim: usize) -> f64 {
    let mut w = vec![0.0; n * n];
    let mut wsum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let sq: f64 = (0..dim).map(|k| (y[i * dim + k] - y[j * dim + k]).powi(2)).sum();
            w[i * n + j] = 1.0 / (1.0 + sq);
            wsum += w[i * n + j];
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (w[i * n + j] / wsum).max(1e-300);
                kl += p[i * n + j] * (p[i * n + j] / q).ln();
            }
        }
    }
    kl
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob() -> Vec<Vec<f64>> {
        let mut rng = seed::rng(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..20)
            .map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn shape_and_zero_iterations() {
        let x = blob();
        let cfg = TsneConfig {
            iters: 0,
            seed: 3,
            ..Default::default()
        };
        let r = tsne_reduce(&x, &cfg).unwrap();
        assert_eq!(r.points.len(), 20);
        assert!(r.points.iter().all(|p| p.len() == 3));
        let again = tsne_reduce(&x, &cfg).unwrap();
        assert_eq!(r.points, again.points);
        assert!(r.points.iter().flatten().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn rejects_infeasible_perplexity() {
        let x = blob();
        let cfg = TsneConfig {
            perplexity: Some(10.0),
            ..Default::default()
        };
        assert!(matches!(tsne_reduce(&x, &cfg), Err(Error::BadConfig(_))));
        assert!(tsne_reduce(&x[..3], &TsneConfig::default()).is_err());
    }

    #[test]
    fn objective_decreases() {
        let r = tsne_reduce(
            &blob(),
            &TsneConfig {
                iters: 300,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.kl_final < r.kl_initial);
    }
}
