use rand::seq::index;
use serde::Serialize;

use super::{estimate_with, pearson, pearson_restricted};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;
use crate::trace::{BehaviorLabel, LabeledTrace};

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    /// Subsample sizes in traces, strictly increasing.
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub smoothing: f64,
    /// Restrict the compared matrices to these behaviors (all four if empty).
    pub behaviors: Vec<BehaviorLabel>,
    pub exec: Exec,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            sizes: vec![500, 1000, 2000, 5000],
            trials: 10,
            seed: 0,
            smoothing: 0.0,
            behaviors: Vec::new(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub sample_size: usize,
    pub mean_pearson: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCurve {
    pub points: Vec<StabilityPoint>,
}

/// For each size, estimates a matrix on `trials` independent subsamples of
/// traces and summarizes the pairwise Pearson correlations between them.
pub fn stability_curve(corpus: &[LabeledTrace], cfg: &StabilityConfig) -> Result<StabilityCurve> {
    if cfg.trials < 2 {
        return Err(Error::bad_config("stability needs at least 2 trials"));
    }
    if cfg.sizes.is_empty() {
        return Err(Error::bad_config("no sample sizes given"));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) || cfg.sizes[0] == 0 {
        return Err(Error::bad_config("sample sizes must be positive and strictly increasing"));
    }
    if let Some(&too_big) = cfg.sizes.iter().find(|&&s| s > corpus.len()) {
        return Err(Error::InsufficientData(format!(
            "sample size {too_big} exceeds corpus of {} traces",
            corpus.len()
        )));
    }

    let mut points = Vec::with_capacity(cfg.sizes.len());
    for (si, &size) in cfg.sizes.iter().enumerate() {
        let matrices = cfg.exec.try_map_range(cfg.trials, |t| {
            let s = seed::derive(cfg.seed, "stability", ((si as u64) << 32) | t as u64);
            let mut rng = seed::rng(s);
            let picked = index::sample(&mut rng, corpus.len(), size);
            let sub: Vec<LabeledTrace> = picked.iter().map(|i| corpus[i].clone()).collect();
            // matrices are estimated sequentially inside a trial; trials are the parallel unit
            estimate_with(&sub, cfg.smoothing, Exec::Sequential).map(|(p, _)| p)
        })?;

        let mut rs = Vec::new();
        for a in 0..matrices.len() {
            for b in a + 1..matrices.len() {
                let r = if cfg.behaviors.is_empty() || cfg.behaviors.len() == 4 {
                    pearson(&matrices[a], &matrices[b])?
                } else {
                    pearson_restricted(&matrices[a], &matrices[b], &cfg.behaviors)?
                };
                rs.push(r);
            }
        }
        let n = rs.len() as f64;
        let mean = rs.iter().sum::<f64>() / n;
        let var = rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        points.push(StabilityPoint {
            sample_size: size,
            mean_pearson: mean,
            std: var.sqrt(),
            trials: cfg.trials,
        });
    }
    Ok(StabilityCurve { points })
}
