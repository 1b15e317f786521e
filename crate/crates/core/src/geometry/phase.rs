use serde::Serialize;

use crate::error::{Error, Result};

pub const EXPLORATION_SLOPE: f64 = 0.6;
pub const EXPLORATION_GAIN: f64 = 0.05;
pub const VALIDATION_BAND: f64 = 0.05;
/// Information increments smaller than this leave the slope undefined.
pub const SLOPE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseState {
    Exploration,
    Validation,
    Neutral,
}

/// Trajectory in the (information, gain) plane. `d_info`, `slope` and `states`
/// are aligned: entry `k` describes the move from `info[k]` to `info[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrajectory {
    pub info: Vec<f64>,
    pub d_info: Vec<f64>,
    pub slope: Vec<Option<f64>>,
    pub states: Vec<PhaseState>,
}

pub fn phase_trajectory(info: &[f64]) -> Result<PhaseTrajectory> {
    if info.len() < 3 {
        return Err(Error::shape(format!(
            "phase trajectory needs at least 3 values, got {}",
            info.len()
        )));
    }
    if info.iter().any(|x| !x.is_finite()) {
        return Err(Error::bad_config("information values must be finite"));
    }
    let d_info: Vec<f64> = info.windows(2).map(|w| w[1] - w[0]).collect();
    let mut slope = vec![None];
    for k in 1..d_info.len() {
        let step = d_info[k];
        slope.push((step.abs() >= SLOPE_GUARD).then(|| (d_info[k] - d_info[k - 1]) / step));
    }
    let states = d_info
        .iter()
        .zip(&slope)
        .map(|(&di, m)| {
            if m.is_some_and(|m| m > EXPLORATION_SLOPE) && di > EXPLORATION_GAIN {
                PhaseState::Exploration
            } else if di.abs() < VALIDATION_BAND {
                PhaseState::Validation
            } else {
                PhaseState::Neutral
            }
        })
        .collect();
    Ok(PhaseTrajectory {
        info: info.to_vec(),
        d_info,
        slope,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_neutral() {
        let p = phase_trajectory(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.d_info, vec![1.0, 1.0, 1.0]);
        assert_eq!(p.slope, vec![None, Some(0.0), Some(0.0)]);
        assert!(p.states.iter().all(|s| *s == PhaseState::Neutral));
    }

    #[test]
    fn accelerating_gain_explores() {
        let p = phase_trajectory(&[0.0, 0.1, 0.4]).unwrap();
        let m = p.slope[1].unwrap();
        assert!((m - 0.2 / 0.3).abs() < 1e-12);
        assert_eq!(p.states[1], PhaseState::Exploration);
    }

    #[test]
    fn flat_validates() {
        let p = phase_trajectory(&[2.0; 5]).unwrap();
        assert!(p.slope.iter().all(Option::is_none));
        assert!(p.states.iter().all(|s| *s == PhaseState::Validation));
        assert!(phase_trajectory(&[1.0, 2.0]).is_err());
    }
}
