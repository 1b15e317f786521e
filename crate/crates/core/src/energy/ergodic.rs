//! Long-run mean energy of a behavior chain.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bondgraph::{sample_index, total_variation, Chain};
use crate::error::{Error, Result};
use crate::seed;

/// Conditional law of a bond energy given its behavior, centred on `mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Spread {
    Zero,
    Normal { sd: Vec<f64> },
    Uniform { half_width: Vec<f64> },
}

impl Spread {
    fn variance(&self, b: usize) -> f64 {
        match self {
            Spread::Zero => 0.0,
            Spread::Normal { sd } => sd[b] * sd[b],
            Spread::Uniform { half_width } => half_width[b] * half_width[b] / 3.0,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> f64 {
        match self {
            Spread::Zero => 0.0,
            Spread::Normal { sd } => sd[b] * rng.sample::<f64, _>(StandardNormal),
            Spread::Uniform { half_width } => half_width[b] * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let v = match self {
            Spread::Zero => return Ok(()),
            Spread::Normal { sd } => sd,
            Spread::Uniform { half_width } => half_width,
        };
        if v.len() != n || v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::bad_config(format!("spread needs {n} non-negative values")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicConfig {
    pub mu: Vec<f64>,
    pub spread: Spread,
    /// Number of simulated bonds.
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub steps: usize,
    pub e_hat: f64,
    /// `sum_b pi_b mu_b`.
    pub e_limit: f64,
    pub gap: f64,
    pub stationary: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Per-behavior sample means; `None` for unvisited behaviors.
    pub class_means: Vec<Option<f64>>,
    /// `sum_b freq_b * class_mean_b`, equal to `e_hat` up to rounding.
    pub decomposed: f64,
    pub tv_to_stationary: f64,
    /// Asymptotic standard deviation of `sqrt(T) (e_hat - e_limit)`.
    pub sigma_eff: f64,
    /// `3 sigma_eff / sqrt(T)`.
    pub bound: f64,
    pub within_bound: bool,
}

/// Simulates a stationary run of the chain, drawing each bond energy
/// independently given its behavior.
pub fn ergodic_energy_sim(chain: &Chain, cfg: &ErgodicConfig) -> Result<ErgodicReport> {
    let n = chain.len();
    if cfg.mu.len() != n || cfg.mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::bad_config(format!("need {n} finite mean energies")));
    }
    cfg.spread.check(n)?;
    if cfg.steps < 2 {
        return Err(Error::bad_config("need at least 2 steps"));
    }
    let pi = chain.stationary()?;
    let e_limit: f64 = pi.iter().zip(&cfg.mu).map(|(p, m)| p * m).sum();

    let mut rng = seed::task_rng(cfg.seed, "ergodic", 0);
    let mut state = sample_index(&pi, rng.random::<f64>());
    let mut visits = vec![0u64; n];
    let mut sums = vec![0.0; n];
    let mut total = 0.0;
    for t in 0..cfg.steps {
        if t > 0 {
            state = chain.sample_next(state, &mut rng);
        }
        let e = cfg.mu[state] + cfg.spread.draw(state, &mut rng);
        visits[state] += 1;
        sums[state] += e;
        total += e;
    }
    let steps = cfg.steps as f64;
    let e_hat = total / steps;
    let frequencies: Vec<f64> = visits.iter().map(|&v| v as f64 / steps).collect();
    let class_means: Vec<Option<f64>> = visits
        .iter()
        .zip(&sums)
        .map(|(&v, &s)| (v > 0).then(|| s / v as f64))
        .collect();
    let decomposed = frequencies
        .iter()
        .zip(&class_means)
        .map(|(f, m)| f * m.unwrap_or(0.0))
        .sum();
    let sigma_eff = asymptotic_sd(chain, &pi, &cfg.mu, &cfg.spread)?;
    let bound = 3.0 * sigma_eff / steps.sqrt();
    let gap = e_hat - e_limit;
    Ok(ErgodicReport {
        steps: cfg.steps,
        e_hat,
        e_limit,
        gap,
        tv_to_stationary: total_variation(&frequencies, &pi),
        stationary: pi,
        frequencies,
        class_means,
        decomposed,
        sigma_eff,
        bound,
        within_bound: gap.abs() <= bound,
    })
}

/// Markov-chain CLT variance of the energy average: noise variance plus the
/// Poisson-equation term `2 <f, g> - <f, f>` for the centred means `f` and
/// `(I - P) g = f`.
fn asymptotic_sd(chain: &Chain, pi: &[f64], mu: &[f64], spread: &Spread) -> Result<f64> {
    let n = chain.len();
    let mean: f64 = pi.iter().zip(mu).map(|(p, m)| p * m).sum();
    let f: Vec<f64> = mu.iter().map(|m| m - mean).collect();
    // (I - P + 1 pi^T) g = f has a unique solution with pi.g = 0
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - chain.get(i, j) + pi[j];
        }
        a[i][n] = f[i];
    }
    let g = gauss_solve(a).ok_or_else(|| Error::NotErgodic("fundamental matrix is singular".into()))?;
    let dot = |x: &[f64], y: &[f64]| -> f64 { (0..n).map(|i| pi[i] * x[i] * y[i]).sum() };
    let chain_var = 2.0 * dot(&f, &g) - dot(&f, &f);
    let noise: f64 = (0..n).map(|b| pi[b] * spread.variance(b)).sum();
    Ok((chain_var + noise).max(0.0).sqrt())
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}
