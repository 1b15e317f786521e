use rand::Rng;
use serde::Serialize;

use super::boltzmann_weights;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;

/// Lower bound `exp((mu_c - mu_b) - 2 delta)` on the probability ratio of a
/// behavior with mean energy `mu_b` over one with `mu_c`, when every energy
/// lies within `delta` of its mean.
pub fn routing_bound(mu_b: f64, mu_c: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::bad_config(format!("half width must be non-negative, got {delta}")));
    }
    Ok(((mu_c - mu_b) - 2.0 * delta).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingCheck {
    pub trials: usize,
    pub comparisons: u64,
    pub violations: u64,
    /// Smallest observed `ratio / bound`.
    pub min_slack: f64,
}

/// Random candidate sets: each trial draws two class means, a half width and
/// up to `max_candidates` energies per class inside the intervals, then
/// compares the Boltzmann probability of every `b` candidate against every
/// `c` candidate with the bound.
pub fn routing_check(trials: usize, max_candidates: usize, seed: u64, exec: Exec) -> Result<RoutingCheck> {
    if trials == 0 || max_candidates == 0 {
        return Err(Error::bad_config("need at least one trial and candidate"));
    }
    let per_trial = exec.try_map_range(trials, |k| -> Result<(u64, u64, f64)> {
        let mut rng = seed::task_rng(seed, "routing", k as u64);
        let mu_b: f64 = rng.random_range(-3.0..3.0);
        let mu_c: f64 = rng.random_range(-3.0..3.0);
        let delta: f64 = rng.random_range(0.0..1.5);
        let nb = rng.random_range(1..=max_candidates);
        let nc = rng.random_range(1..=max_candidates);
        let mut energies = Vec::with_capacity(nb + nc);
        for i in 0..nb + nc {
            let mu = if i < nb { mu_b } else { mu_c };
            energies.push(mu + rng.random_range(-delta..=delta));
        }
        let w = boltzmann_weights(&energies)?;
        let bound = routing_bound(mu_b, mu_c, delta)?;
        let (mut cmp, mut bad, mut slack) = (0u64, 0u64, f64::INFINITY);
        for i in 0..nb {
            for j in nb..nb + nc {
                let ratio = w[i] / w[j];
                cmp += 1;
                slack = slack.min(ratio / bound);
                if ratio < bound * (1.0 - 1e-12) {
                    bad += 1;
                }
            }
        }
        Ok((cmp, bad, slack))
    })?;
    Ok(RoutingCheck {
        trials,
        comparisons: per_trial.iter().map(|x| x.0).sum(),
        violations: per_trial.iter().map(|x| x.1).sum(),
        min_slack: per_trial.iter().map(|x| x.2).fold(f64::INFINITY, f64::min),
    })
}
