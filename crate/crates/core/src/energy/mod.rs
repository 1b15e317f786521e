//! Attention energies of behavior bonds and Monte Carlo checks of the
//! energy-ordering theory.
//!
//! Energies are negated attention logits at temperature 1, so attention
//! weights are the Boltzmann distribution of the energies.

mod attention;
mod ergodic;
mod ordering;
mod paths;
mod rope;
mod routing;

pub use attention::{
    bond_energies, read_attention, read_spans, AttentionRecord, BondEnergySample, BondOptions,
    ExploreOrientation, StepSpans,
};
pub use ergodic::{ergodic_energy_sim, ErgodicConfig, ErgodicReport, Spread};
pub use ordering::{ordering_report, ordering_report_with, percentile, BondSummary, GapInterval, OrderingReport, BOOTSTRAP_RESAMPLES};
pub use paths::{
    build_path_graph, count_paths, enumerate_paths, gibbs_weight_ratio, softmin_energy, PathGraph, SoftMin,
    DEFAULT_EDGE_THRESHOLD,
};
pub use rope::{
    concentration_mc, rope_mc, rotary_mu, sample_bound, ConcentrationReport, DistanceEstimate, RhoFamily,
    RopeConfig, RopeReport, RopeSampler, Rotation,
};
pub use routing::{routing_bound, routing_check, RoutingCheck};

use crate::error::{Error, Result};

/// Key dimension and temperature of the attention energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub d_k: usize,
    pub temperature: f64,
}

impl EnergyModel {
    pub fn new(d_k: usize) -> Self {
        EnergyModel { d_k, temperature: 1.0 }
    }

    /// `-q.k / sqrt(d_k)`.
    pub fn energy(&self, q: &[f64], k: &[f64]) -> f64 {
        let dot: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
        -dot / (self.d_k as f64).sqrt()
    }
}

/// Boltzmann weights `exp(-E_i) / sum_j exp(-E_j)` at temperature 1.
pub fn boltzmann_weights(energies: &[f64]) -> Result<Vec<f64>> {
    boltzmann_weights_at(energies, 1.0)
}

pub fn boltzmann_weights_at(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::bad_config("no energies given"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::bad_config(format!("temperature must be positive, got {temperature}")));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::bad_config("energies must be finite"));
    }
    let emin = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - emin) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// `ln sum exp(x_i)`, stable for large magnitudes.
pub fn logsumexp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        assert_eq!(boltzmann_weights(&[2.0; 4]).unwrap(), vec![0.25; 4]);
        let w = boltzmann_weights(&[0.0, 3f64.ln()]).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        assert_eq!(boltzmann_weights(&[7.0]).unwrap(), vec![1.0]);
        assert!(boltzmann_weights(&[]).is_err());
    }

    #[test]
    fn energy_is_negated_scaled_logit() {
        let m = EnergyModel::new(4);
        assert_eq!(m.energy(&[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]), -1.0);
        assert_eq!(m.temperature, 1.0);
    }

    #[test]
    fn logsumexp_is_stable() {
        let v = logsumexp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp([]), f64::NEG_INFINITY);
    }
}
