use rand::Rng;
use serde::Serialize;

use super::BondEnergySample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;
use crate::trace::BehaviorLabel;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondSummary {
    pub bond: BehaviorLabel,
    pub count: usize,
    pub mean: Option<f64>,
}

/// Percentile interval of a mean-energy gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub bonds: Vec<BondSummary>,
    /// Mean deep < mean reflect < mean explore.
    pub ordering_holds: bool,
    /// Reflect minus deep.
    pub gap_reflect_deep: GapInterval,
    /// Explore minus reflect.
    pub gap_explore_reflect: GapInterval,
    pub resamples: usize,
    pub level: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-bond means, the deep < reflect < explore check, and 95% bootstrap
/// intervals on the two gaps. Each resample redraws every class with
/// replacement from its own samples.
pub fn ordering_report(samples: &[BondEnergySample], seed: u64, exec: Exec) -> Result<OrderingReport> {
    ordering_report_with(samples, seed, BOOTSTRAP_RESAMPLES, exec)
}

pub fn ordering_report_with(
    samples: &[BondEnergySample],
    seed: u64,
    resamples: usize,
    exec: Exec,
) -> Result<OrderingReport> {
    let by = |b: BehaviorLabel| -> Vec<f64> {
        samples.iter().filter(|s| s.bond == b).map(|s| s.energy).collect()
    };
    let [n, d, r, e] = BehaviorLabel::ALL.map(by);
    for (b, xs) in [(BehaviorLabel::Deep, &d), (BehaviorLabel::Reflect, &r), (BehaviorLabel::Explore, &e)] {
        if xs.is_empty() {
            return Err(Error::InsufficientData(format!("no {} bonds", b.canonical())));
        }
    }
    if resamples < 2 {
        return Err(Error::bad_config("bootstrap needs at least 2 resamples"));
    }
    let (md, mr, me) = (mean(&d), mean(&r), mean(&e));

    let draws = exec.map_range(resamples, |k| {
        let mut rng = seed::task_rng(seed, "bootstrap", k as u64);
        let mut resample_mean = |xs: &[f64]| {
            let mut s = 0.0;
            for _ in 0..xs.len() {
                s += xs[rng.random_range(0..xs.len())];
            }
            s / xs.len() as f64
        };
        let bd = resample_mean(&d);
        let br = resample_mean(&r);
        let be = resample_mean(&e);
        (br - bd, be - br)
    });
    let mut g1: Vec<f64> = draws.iter().map(|x| x.0).collect();
    let mut g2: Vec<f64> = draws.iter().map(|x| x.1).collect();
    g1.sort_by(f64::total_cmp);
    g2.sort_by(f64::total_cmp);
    let interval = |est: f64, sorted: &[f64]| GapInterval {
        estimate: est,
        lower: percentile(sorted, 0.025),
        upper: percentile(sorted, 0.975),
    };

    let summary = |b: BehaviorLabel, xs: &[f64]| BondSummary {
        bond: b,
        count: xs.len(),
        mean: (!xs.is_empty()).then(|| mean(xs)),
    };
    Ok(OrderingReport {
        bonds: vec![
            summary(BehaviorLabel::Normal, &n),
            summary(BehaviorLabel::Deep, &d),
            summary(BehaviorLabel::Reflect, &r),
            summary(BehaviorLabel::Explore, &e),
        ],
        ordering_holds: md < mr && mr < me,
        gap_reflect_deep: interval(mr - md, &g1),
        gap_explore_reflect: interval(me - mr, &g2),
        resamples,
        level: 0.95,
    })
}
