//! Sequential versus rayon execution of the main Monte Carlo and resampling
//! loops. Results are identical across modes; only wall time differs.

use std::hint::black_box;

use cotmol_core::bondgraph::{estimate_with, stability_curve, StabilityConfig};
use cotmol_core::energy::{ordering_report_with, rope_mc, BondEnergySample, RopeConfig};
use cotmol_core::{seed, BehaviorLabel, Exec, LabeledTrace};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn corpus(traces: usize, len: usize) -> Vec<LabeledTrace> {
    let mut rng = seed::rng(1);
    (0..traces)
        .map(|i| {
            let labels: Vec<BehaviorLabel> = (0..len)
                .map(|_| BehaviorLabel::from_index(rng.random_range(0..4)).unwrap())
                .collect();
            LabeledTrace::from_labels(format!("t{i}"), &labels).unwrap()
        })
        .collect()
}

fn rope(c: &mut Criterion) {
    let mut g = c.benchmark_group("rope_mc");
    g.sample_size(10);
    let cfg = RopeConfig {
        samples: 50_000,
        ..Default::default()
    };
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rope_mc(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

fn stability(c: &mut Criterion) {
    let data = corpus(2000, 30);
    let mut g = c.benchmark_group("stability");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = StabilityConfig {
            sizes: vec![100, 500, 1000],
            trials: 10,
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| stability_curve(black_box(&data), &cfg).unwrap())
        });
    }
    g.finish();
}

fn estimate(c: &mut Criterion) {
    let data = corpus(20_000, 40);
    let mut g = c.benchmark_group("estimate");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_with(black_box(&data), 0.0, exec).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut rng = seed::rng(2);
    let samples: Vec<BondEnergySample> = (0..3000)
        .map(|i| BondEnergySample {
            bond: BehaviorLabel::from_index(1 + i % 3).unwrap(),
            energy: rng.random::<f64>() + (i % 3) as f64,
            trace_id: "b".into(),
            edge_index: i,
            query_token: 0,
            key_token: 0,
        })
        .collect();
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ordering_report_with(black_box(&samples), 0, 1000, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, rope, stability, estimate, bootstrap);
criterion_main!(benches);
