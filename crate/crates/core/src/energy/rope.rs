//! Monte Carlo check of expected logits under rotary position encoding, and
//! the finite-sample ordering bound.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed::{self, Rng as SeedRng};

/// Cross-covariance decay `rho(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum RhoFamily {
    /// `rho0 * gamma^d`.
    Geometric { rho0: f64, gamma: f64 },
    Constant { rho: f64 },
}

impl Default for RhoFamily {
    fn default() -> Self {
        RhoFamily::Geometric { rho0: 0.9, gamma: 0.8 }
    }
}

impl RhoFamily {
    pub fn eval(&self, d: usize) -> f64 {
        match *self {
            RhoFamily::Geometric { rho0, gamma } => rho0 * gamma.powi(d as i32),
            RhoFamily::Constant { rho } => rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rotation {
    /// Standard rotary angles `base^(-2m/d_k)` per 2-D block.
    Rotary { base: f64 },
    Identity,
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::Rotary { base: 10000.0 }
    }
}

impl Rotation {
    /// `cos(d * theta_m)` for each 2-D block.
    fn block_cosines(&self, d_k: usize, d: usize) -> Vec<f64> {
        (0..d_k / 2)
            .map(|m| match *self {
                Rotation::Rotary { base } => {
                    let theta = base.powf(-2.0 * m as f64 / d_k as f64);
                    (d as f64 * theta).cos()
                }
                Rotation::Identity => 1.0,
            })
            .collect()
    }

    fn block_sines(&self, d_k: usize, d: usize) -> Vec<f64> {
        (0..d_k / 2)
            .map(|m| match *self {
                Rotation::Rotary { base } => {
                    let theta = base.powf(-2.0 * m as f64 / d_k as f64);
                    (d as f64 * theta).sin()
                }
                Rotation::Identity => 0.0,
            })
            .collect()
    }
}

/// `tr(R(d)) / sqrt(d_k)`.
pub fn rotary_mu(rotation: Rotation, d_k: usize, d: usize) -> f64 {
    2.0 * rotation.block_cosines(d_k, d).iter().sum::<f64>() / (d_k as f64).sqrt()
}

/// How logits are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RopeSampler {
    /// Draw full query/key vectors and rotate them.
    Full,
    /// Draw the logit from its exact law given per-block radii: block `m`
    /// contributes `rho cos(d theta_m) r_m^2` plus a Gaussian with variance
    /// `(1 - rho^2) r_m^2`, where `r_m^2 ~ 2 Exp(1)`.
    #[default]
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RopeConfig {
    pub d_k: usize,
    pub rho: RhoFamily,
    pub rotation: Rotation,
    /// Distances for deep, reflect and explore bonds: `1 < d_R < d_E`.
    pub distances: [usize; 3],
    pub samples: usize,
    pub seed: u64,
    pub sampler: RopeSampler,
}

impl Default for RopeConfig {
    fn default() -> Self {
        RopeConfig {
            d_k: 64,
            rho: RhoFamily::default(),
            rotation: Rotation::default(),
            distances: [1, 4, 16],
            samples: 100_000,
            seed: 0,
            sampler: RopeSampler::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub distance: usize,
    pub rho: f64,
    pub mu: f64,
    pub theory_logit: f64,
    pub mean_logit: f64,
    /// Sample standard deviation of single logits.
    pub sd: f64,
    /// `5 sd / sqrt(N)`.
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RopeReport {
    pub estimates: Vec<DistanceEstimate>,
    /// Negated empirical means are strictly increasing with distance.
    pub ordering_holds: bool,
    pub theory_ordering_holds: bool,
    pub mu_non_increasing: bool,
    pub samples: usize,
}

fn check_config(cfg: &RopeConfig) -> Result<()> {
    if cfg.d_k < 2 || cfg.d_k % 2 != 0 {
        return Err(Error::bad_config(format!("d_k must be even and >= 2, got {}", cfg.d_k)));
    }
    if cfg.samples < 2 {
        return Err(Error::bad_config("need at least 2 samples per distance"));
    }
    let [a, b, c] = cfg.distances;
    if a != 1 || !(a < b && b < c) {
        return Err(Error::bad_config(format!(
            "distances must be 1 < d_R < d_E, got {:?}",
            cfg.distances
        )));
    }
    let rho = cfg.distances.map(|d| cfg.rho.eval(d));
    if rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::AssumptionViolated {
            assumption: "A1",
            detail: format!("rho must lie in [0, 1], got {rho:?}"),
        });
    }
    if !(rho[0] > rho[1] && rho[1] > rho[2]) {
        return Err(Error::AssumptionViolated {
            assumption: "A1",
            detail: format!("rho is not strictly decreasing over the distances: {rho:?}"),
        });
    }
    let mu = cfg.distances.map(|d| rotary_mu(cfg.rotation, cfg.d_k, d));
    if let Some(bad) = mu.iter().position(|m| *m <= 0.0) {
        return Err(Error::AssumptionViolated {
            assumption: "A2",
            detail: format!("mu({}) = {} is not positive", cfg.distances[bad], mu[bad]),
        });
    }
    Ok(())
}

/// Samples per work chunk; chunks get their own derived seed.
const CHUNK: usize = 4096;

/// Draws logits `u^T R(d) v / sqrt(d_k)` with `E[u v^T] = rho(d) I` and
/// compares their mean with `rho(d) mu(d)`.
pub fn rope_mc(cfg: &RopeConfig, exec: Exec) -> Result<RopeReport> {
    check_config(cfg)?;
    let mut estimates = Vec::with_capacity(3);
    for (k, &d) in cfg.distances.iter().enumerate() {
        let rho = cfg.rho.eval(d);
        let mu = rotary_mu(cfg.rotation, cfg.d_k, d);
        let cos = cfg.rotation.block_cosines(cfg.d_k, d);
        let sin = cfg.rotation.block_sines(cfg.d_k, d);
        let chunks = cfg.samples.div_ceil(CHUNK);
        let sums = exec.map_range(chunks, |c| {
            let n = CHUNK.min(cfg.samples - c * CHUNK);
            let mut rng = seed::task_rng(cfg.seed, "rope", ((k as u64) << 40) | c as u64);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = match cfg.sampler {
                    RopeSampler::Full => full_logit(&mut rng, rho, &cos, &sin, cfg.d_k),
                    RopeSampler::Reduced => reduced_logit(&mut rng, rho, &cos, cfg.d_k),
                };
                s1 += x;
                s2 += x * x;
            }
            (s1, s2)
        });
        let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = cfg.samples as f64;
        let mean = s1 / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        let sd = var.sqrt();
        let theory = rho * mu;
        let tolerance = 5.0 * sd / n.sqrt();
        estimates.push(DistanceEstimate {
            distance: d,
            rho,
            mu,
            theory_logit: theory,
            mean_logit: mean,
            sd,
            tolerance,
            within_tolerance: (mean - theory).abs() <= tolerance,
        });
    }
    let e = |i: usize| -estimates[i].mean_logit;
    let t = |i: usize| -estimates[i].theory_logit;
    Ok(RopeReport {
        ordering_holds: e(0) < e(1) && e(1) < e(2),
        theory_ordering_holds: t(0) < t(1) && t(1) < t(2),
        mu_non_increasing: estimates[0].mu >= estimates[1].mu && estimates[1].mu >= estimates[2].mu,
        estimates,
        samples: cfg.samples,
    })
}

fn full_logit(rng: &mut SeedRng, rho: f64, cos: &[f64], sin: &[f64], d_k: usize) -> f64 {
    let resid = (1.0 - rho * rho).sqrt();
    let mut s = 0.0;
    for (c, sn) in cos.iter().zip(sin) {
        let u1: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        let w1: f64 = rng.sample(StandardNormal);
        let w2: f64 = rng.sample(StandardNormal);
        let v1 = rho * u1 + resid * w1;
        let v2 = rho * u2 + resid * w2;
        // u^T [[c, -s], [s, c]] v
        s += u1 * (c * v1 - sn * v2) + u2 * (sn * v1 + c * v2);
    }
    s / (d_k as f64).sqrt()
}

fn reduced_logit(rng: &mut SeedRng, rho: f64, cos: &[f64], d_k: usize) -> f64 {
    let mut aligned = 0.0;
    let mut r2_total = 0.0;
    for c in cos {
        let e: f64 = Exp1.sample(rng);
        let r2 = 2.0 * e;
        aligned += c * r2;
        r2_total += r2;
    }
    let z: f64 = rng.sample(StandardNormal);
    (rho * aligned + (1.0 - rho * rho).sqrt() * r2_total.sqrt() * z) / (d_k as f64).sqrt()
}

/// `ceil(2 sigma^2 / eps^2 * ln(4 / delta))`.
pub fn sample_bound(sigma: f64, epsilon: f64, delta: f64) -> Result<u64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::bad_config(format!("sigma must be positive, got {sigma}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::bad_config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::bad_config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok((2.0 * sigma * sigma / (epsilon * epsilon) * (4.0 / delta).ln()).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: u64,
    pub experiments: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub delta: f64,
    pub within_delta: bool,
}

/// Runs `experiments` independent trials of `N = sample_bound(..)` Gaussian
/// logits per distance with the given means (strictly decreasing, gaps above
/// `2 epsilon`) and counts trials whose sample means are out of order.
pub fn concentration_mc(
    means: [f64; 3],
    sigma: f64,
    epsilon: f64,
    delta: f64,
    experiments: usize,
    seed: u64,
    exec: Exec,
) -> Result<ConcentrationReport> {
    let n = sample_bound(sigma, epsilon, delta)?;
    let min_gap = (means[0] - means[1]).min(means[1] - means[2]);
    if !(min_gap > 2.0 * epsilon) {
        return Err(Error::bad_config(format!(
            "mean gaps must exceed 2 * epsilon = {}, smallest is {min_gap}",
            2.0 * epsilon
        )));
    }
    if experiments == 0 {
        return Err(Error::bad_config("need at least one experiment"));
    }
    let failed = exec.map_range(experiments, |x| {
        let mut rng = seed::task_rng(seed, "concentration", x as u64);
        let m = means.map(|mu| {
            let mut s = 0.0;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                s += mu + sigma * z;
            }
            s / n as f64
        });
        // energies are negated logits
        !(-m[0] < -m[1] && -m[1] < -m[2])
    });
    let failures = failed.iter().filter(|f| **f).count();
    let rate = failures as f64 / experiments as f64;
    Ok(ConcentrationReport {
        n,
        experiments,
        failures,
        failure_rate: rate,
        delta,
        within_delta: rate <= delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_trace() {
        assert!((rotary_mu(Rotation::Identity, 16, 3) - 4.0).abs() < 1e-12);
        let cfg = RopeConfig {
            d_k: 16,
            rho: RhoFamily::Geometric { rho0: 0.5 / 0.8, gamma: 0.8 },
            rotation: Rotation::Identity,
            samples: 20_000,
            ..Default::default()
        };
        let r = rope_mc(&cfg, Exec::Sequential).unwrap();
        assert!((r.estimates[0].theory_logit - 2.0).abs() < 1e-12);
        assert!(r.estimates.iter().all(|e| e.within_tolerance));
    }

    #[test]
    fn constant_rho_violates_a1() {
        let cfg = RopeConfig {
            rho: RhoFamily::Constant { rho: 0.5 },
            ..Default::default()
        };
        assert!(matches!(
            rope_mc(&cfg, Exec::Sequential),
            Err(Error::AssumptionViolated { assumption: "A1", .. })
        ));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(sample_bound(1.0, 0.1, 0.05).unwrap(), 877);
        assert!(sample_bound(1.0, 1.0, 4.0 / std::f64::consts::E).is_err());
        assert!(sample_bound(0.0, 0.1, 0.05).is_err());
    }

    #[test]
    fn samplers_agree() {
        let base = RopeConfig {
            samples: 40_000,
            seed: 11,
            ..Default::default()
        };
        let full = rope_mc(
            &RopeConfig {
                sampler: RopeSampler::Full,
                ..base.clone()
            },
            Exec::Sequential,
        )
        .unwrap();
        let reduced = rope_mc(&base, Exec::Sequential).unwrap();
        for (a, b) in full.estimates.iter().zip(&reduced.estimates) {
            assert!((a.mean_logit - b.mean_logit).abs() < 6.0 * a.sd / 40_000f64.sqrt() * 1.5);
            assert!((a.sd - b.sd).abs() / a.sd < 0.05);
        }
    }
}
