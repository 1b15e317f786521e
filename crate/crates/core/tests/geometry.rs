use std::collections::VecDeque;

use cotmol_core::geometry::{
    adaptive_alpha, cluster, decode_cmeb, encode_cmeb, euclidean, folding_metrics, meb, phase_trajectory,
    tsne_reduce, volume, Ball, ClusterSet, EmbeddingSequence, FoldOptions, PhaseState, TsneConfig,
};
use cotmol_core::{BehaviorLabel, Error, LabeledTrace};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn points(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n)
}

/// Circumscribed ball of an affinely independent subset, via nalgebra.
fn circum_oracle(pts: &[&Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let p0 = pts[0];
    let k = pts.len() - 1;
    if k == 0 {
        return Some((p0.clone(), 0.0));
    }
    let d = p0.len();
    let v = DMatrix::from_fn(k, d, |i, j| pts[i + 1][j] - p0[j]);
    let gram = &v * v.transpose() * 2.0;
    let rhs = DVector::from_fn(k, |i, _| v.row(i).norm_squared());
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-9 * smax.max(1e-300) {
        return None;
    }
    let lambda = svd.solve(&rhs, 1e-14).ok()?;
    let c = DVector::from_column_slice(p0) + v.transpose() * lambda;
    let r = pts.iter().map(|p| (DVector::from_column_slice(p) - &c).norm()).fold(0.0, f64::max);
    Some((c.iter().copied().collect(), r))
}

/// Smallest covering ball over all supports of size 1 to d + 1.
fn meb_oracle(pts: &[Vec<f64>]) -> f64 {
    let n = pts.len();
    let d = pts[0].len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > d + 1 {
            continue;
        }
        let sub: Vec<&Vec<f64>> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &pts[i]).collect();
        if let Some((c, r)) = circum_oracle(&sub) {
            if r < best && pts.iter().all(|p| euclidean(&c, p) <= r * (1.0 + 1e-9) + 1e-9) {
                best = r;
            }
        }
    }
    best
}

/// Random rotation (QR of a seeded matrix) plus translation.
fn isometry(dim: usize, seed_vals: &[f64], shift: &[f64]) -> impl Fn(&[f64]) -> Vec<f64> {
    let m = DMatrix::from_fn(dim, dim, |i, j| seed_vals[i * dim + j]);
    let q = m.qr().q();
    let shift = shift.to_vec();
    move |p: &[f64]| {
        let y = &q * DVector::from_column_slice(p);
        y.iter().zip(&shift).map(|(a, b)| a + b).collect()
    }
}

fn components_oracle(pts: &[Vec<f64>], alpha: f64) -> Vec<usize> {
    let n = pts.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for v in 0..n {
                if comp[v] == usize::MAX && euclidean(&pts[u], &pts[v]) < alpha {
                    comp[v] = next;
                    q.push_back(v);
                }
            }
        }
        next += 1;
    }
    comp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn meb_matches_brute_force_2d(pts in points(2, 1..8), seed in 0u64..1000) {
        let ball = meb(&pts, seed).unwrap();
        let want = meb_oracle(&pts);
        prop_assert!((ball.radius - want).abs() <= 1e-7 * (1.0 + want), "{} vs {}", ball.radius, want);
        prop_assert!(pts.iter().all(|p| ball.contains(p, 1e-9 * (1.0 + ball.radius))));
    }

    #[test]
    fn meb_matches_brute_force_3d(pts in points(3, 1..8), seed in 0u64..1000) {
        let ball = meb(&pts, seed).unwrap();
        let want = meb_oracle(&pts);
        prop_assert!((ball.radius - want).abs() <= 1e-7 * (1.0 + want), "{} vs {}", ball.radius, want);
        prop_assert!(pts.iter().all(|p| ball.contains(p, 1e-9 * (1.0 + ball.radius))));
    }

    #[test]
    fn meb_radius_is_monotone_and_seed_free(pts in points(3, 2..40), extra in points(3, 1..2), s1 in 0u64..99, s2 in 0u64..99) {
        let a = meb(&pts, s1).unwrap();
        let b = meb(&pts, s2).unwrap();
        prop_assert!((a.radius - b.radius).abs() <= 1e-9 * (1.0 + a.radius));
        let mut more = pts.clone();
        more.extend(extra);
        let c = meb(&more, s1).unwrap();
        prop_assert!(c.radius >= a.radius * (1.0 - 1e-9));
        // the diameter bounds the radius from both sides
        let diam = pts.iter().flat_map(|p| pts.iter().map(move |q| euclidean(p, q))).fold(0.0, f64::max);
        prop_assert!(a.radius >= diam / 2.0 * (1.0 - 1e-9));
        prop_assert!(a.radius <= diam * (3.0f64 / 8.0).sqrt() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn meb_isometry_invariant(
        pts in points(3, 2..25),
        rot in prop::collection::vec(-1.0f64..1.0, 9),
        shift in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let m = DMatrix::from_row_slice(3, 3, &rot);
        prop_assume!(m.determinant().abs() > 1e-3);
        let f = isometry(3, &rot, &shift);
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| f(p)).collect();
        let a = meb(&pts, 1).unwrap();
        let b = meb(&moved, 1).unwrap();
        prop_assert!((a.radius - b.radius).abs() <= 1e-7 * (1.0 + a.radius));
        let vol = volume(&a, 3).unwrap();
        prop_assert!((vol - 4.0 / 3.0 * std::f64::consts::PI * a.radius.powi(3)).abs() <= 1e-9 * (1.0 + vol));
    }

    #[test]
    fn clusters_are_alpha_components(pts in points(2, 2..30), alpha in 0.5f64..6.0) {
        let cs = cluster(&pts, alpha).unwrap();
        let want = components_oracle(&pts, alpha);
        prop_assert_eq!(&cs.assignment, &want);
        prop_assert_eq!(cs.n_clusters, want.iter().max().unwrap() + 1);
        // adjacency: some cross pair closer than 2 alpha
        for a in 0..cs.n_clusters {
            for b in a + 1..cs.n_clusters {
                let close = (0..pts.len()).any(|i| {
                    (0..pts.len()).any(|j| want[i] == a && want[j] == b && euclidean(&pts[i], &pts[j]) < 2.0 * alpha)
                });
                prop_assert_eq!(cs.adjacency.contains(&(a, b)), close);
            }
        }
    }

    #[test]
    fn clusters_isometry_invariant(
        pts in points(3, 2..25),
        rot in prop::collection::vec(-1.0f64..1.0, 9),
        shift in prop::collection::vec(-50.0f64..50.0, 3),
        alpha in 0.5f64..6.0,
    ) {
        let m = DMatrix::from_row_slice(3, 3, &rot);
        prop_assume!(m.determinant().abs() > 1e-3);
        // skip inputs with a pair distance within rounding of alpha
        let near = pts.iter().enumerate().any(|(i, p)| pts[i + 1..].iter().any(|q| {
            let d = euclidean(p, q);
            (d - alpha).abs() < 1e-9 || (d - 2.0 * alpha).abs() < 1e-9
        }));
        prop_assume!(!near);
        let f = isometry(3, &rot, &shift);
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| f(p)).collect();
        let a = cluster(&pts, alpha).unwrap();
        let b = cluster(&moved, alpha).unwrap();
        prop_assert_eq!(a.assignment, b.assignment);
        prop_assert_eq!(a.adjacency, b.adjacency);
    }

    #[test]
    fn adaptive_alpha_matches_brute_force(pts in points(3, 2..20)) {
        let mut ds = Vec::new();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if i != j {
                    ds.push(euclidean(&pts[i], &pts[j]));
                }
            }
        }
        let max = ds.iter().copied().fold(0.0, f64::max);
        let min = ds.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        let a = adaptive_alpha(&pts).unwrap();
        prop_assert!((a.value - 0.02 * (max - min)).abs() <= 1e-12 * (1.0 + max));
        prop_assert_eq!(a.degenerate, a.value <= 0.0);
    }

    #[test]
    fn fold_distances_match_brute_force(
        pts in points(2, 2..12),
        labels_seed in prop::collection::vec(0usize..4, 11),
        alpha in 0.5f64..5.0,
        include_source in any::<bool>(),
    ) {
        let n = pts.len();
        let labels: Vec<BehaviorLabel> =
            labels_seed[..n - 1].iter().map(|&i| BehaviorLabel::from_index(i).unwrap()).collect();
        let lt = LabeledTrace::from_labels("t", &labels).unwrap();
        let cs = cluster(&pts, alpha).unwrap();
        let opts = FoldOptions { include_source, ..Default::default() };
        let edges = folding_metrics(&lt, &pts, &cs, opts).unwrap();
        prop_assert_eq!(edges.len(), n - 1);
        for e in &edges {
            let t = e.edge;
            prop_assert_eq!(e.d, euclidean(&pts[t + 1], &pts[t]));
            let hist = if include_source { t + 1 } else { t };
            let r = (0..hist).map(|s| euclidean(&pts[t + 1], &pts[s])).fold(None, |m: Option<f64>, d| {
                Some(m.map_or(d, |m| m.min(d)))
            });
            prop_assert_eq!(e.r, r);
            prop_assert_eq!(e.reconnects, r.is_some_and(|r| r < alpha));
            prop_assert_eq!(e.g, cs.hops(cs.assignment[t], cs.assignment[t + 1]));
        }
    }

    #[test]
    fn phase_slopes_match_definition(info in prop::collection::vec(-3.0f64..3.0, 3..30)) {
        let p = phase_trajectory(&info).unwrap();
        prop_assert_eq!(p.d_info.len(), info.len() - 1);
        prop_assert_eq!(p.states.len(), p.d_info.len());
        for k in 0..p.d_info.len() {
            prop_assert_eq!(p.d_info[k], info[k + 1] - info[k]);
            match p.states[k] {
                PhaseState::Exploration => {
                    prop_assert!(p.slope[k].unwrap() > 0.6 && p.d_info[k] > 0.05);
                }
                PhaseState::Validation => prop_assert!(p.d_info[k].abs() < 0.05),
                PhaseState::Neutral => {
                    prop_assert!(p.d_info[k].abs() >= 0.05);
                    prop_assert!(!(p.slope[k].is_some_and(|m| m > 0.6) && p.d_info[k] > 0.05));
                }
            }
        }
    }

    #[test]
    fn cmeb_round_trip(pts in points(4, 1..20)) {
        let f32ed: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| *x as f32 as f64).collect()).collect();
        let seq = EmbeddingSequence::new("s", f32ed).unwrap();
        prop_assert_eq!(decode_cmeb(&encode_cmeb(&seq), "s".into()).unwrap(), seq);
    }
}

#[test]
fn cluster_hops_on_a_chain() {
    // five clusters on a line, neighbours 1.5 apart with alpha = 1
    let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![1.5 * i as f64, 0.0]).collect();
    let cs: ClusterSet = cluster(&pts, 1.0).unwrap();
    assert_eq!(cs.n_clusters, 5);
    assert_eq!(cs.hops(0, 4), Some(4));
    assert_eq!(cs.hops(1, 3), Some(2));
    let far = cluster(&[vec![0.0, 0.0], vec![10.0, 0.0]], 1.0).unwrap();
    assert_eq!(far.hops(0, 1), None);
    assert!(cluster(&pts, 0.0).is_err());
    assert!(matches!(adaptive_alpha(&[vec![1.0, 1.0], vec![1.0, 1.0]]), Err(Error::DegenerateGeometry(_))));
}

#[test]
fn tsne_keeps_separated_groups_apart() {
    // three tight groups in direction space
    let dirs = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
    let mut x = Vec::new();
    for (g, d) in dirs.iter().enumerate() {
        for k in 0..8 {
            let jitter = 0.01 * (k as f64 + 1.0);
            let mut v = d.to_vec();
            v[(g + 1) % 4] += jitter;
            x.push(v);
        }
    }
    let cfg = TsneConfig {
        iters: 500,
        seed: 9,
        ..Default::default()
    };
    let r = tsne_reduce(&x, &cfg).unwrap();
    assert_eq!(r.points.len(), 24);
    assert!(r.points.iter().flatten().all(|v| v.is_finite()));
    assert!(r.kl_final < r.kl_initial);
    let group = |i: usize| i / 8;
    for i in 0..24 {
        let nearest = (0..24)
            .filter(|&j| j != i)
            .min_by(|&a, &b| euclidean(&r.points[i], &r.points[a]).total_cmp(&euclidean(&r.points[i], &r.points[b])))
            .unwrap();
        assert_eq!(group(i), group(nearest), "point {i}");
    }
    assert_eq!(tsne_reduce(&x, &cfg).unwrap(), r);
}

#[test]
fn tsne_tolerates_duplicates_and_zero_vectors() {
    let mut x = vec![vec![1.0, 2.0, 3.0]; 6];
    x.push(vec![0.0, 0.0, 0.0]);
    x.push(vec![-1.0, 0.5, 0.0]);
    let r = tsne_reduce(&x, &TsneConfig { iters: 300, ..Default::default() }).unwrap();
    assert!(r.points.iter().flatten().all(|v| v.is_finite()));
    assert!(r.kl_final.is_finite());
    assert!(tsne_reduce(&x[..3], &TsneConfig::default()).is_err());
    let too_high = TsneConfig { perplexity: Some(5.0), ..Default::default() };
    assert!(matches!(tsne_reduce(&x, &too_high), Err(Error::BadConfig(_))));
}

#[test]
fn ball_volume_dimensions() {
    let b = Ball { center: vec![0.0, 0.0], radius: 2.0 };
    assert!((volume(&b, 2).unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    assert!(volume(&b, 4).is_err());
}
