//! Minimum enclosing balls by move-to-front Welzl recursion.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        super::euclidean(&self.center, p) <= self.radius + tol
    }
}

fn slack(radius: f64) -> f64 {
    1e-12 * (1.0 + radius)
}

/// Smallest ball covering `points`. The seed only changes the visiting order.
pub fn meb(points: &[Vec<f64>], seed: u64) -> Result<Ball> {
    let first = points
        .first()
        .ok_or_else(|| Error::DegenerateGeometry("no points".into()))?;
    let dim = first.len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::shape("points must share a positive dimension"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateGeometry("non-finite coordinate".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut seed::task_rng(seed, "meb", 0));
    let mut support = Vec::with_capacity(dim + 1);
    Ok(mtf(points, &mut order, points.len(), &mut support, dim))
}

/// Ball of the first `end` entries of `order` with `support` on the boundary.
/// Points that end up outside are moved to the front, which keeps the
/// recursion depth bounded by `dim + 1`.
fn mtf(points: &[Vec<f64>], order: &mut Vec<usize>, end: usize, support: &mut Vec<usize>, dim: usize) -> Ball {
    let mut ball = boundary_ball(points, support, dim);
    if support.len() == dim + 1 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        let idx = order[i];
        if !ball.contains(&points[idx], slack(ball.radius)) {
            support.push(idx);
            ball = mtf(points, order, i, support, dim);
            support.pop();
            order.remove(i);
            order.insert(0, idx);
        }
        i += 1;
    }
    ball
}

/// Smallest ball with every support point on its boundary.
fn boundary_ball(points: &[Vec<f64>], support: &[usize], dim: usize) -> Ball {
    match support.len() {
        0 => Ball {
            center: vec![0.0; dim],
            radius: -1.0,
        },
        1 => Ball {
            center: points[support[0]].clone(),
            radius: 0.0,
        },
        _ => {
            let pts: Vec<&[f64]> = support.iter().map(|&i| points[i].as_slice()).collect();
            circumball(&pts).unwrap_or_else(|| fallback(&pts))
        }
    }
}

/// Circumscribed ball within the affine hull of `pts`; `None` when the points
/// are affinely dependent.
pub fn circumball(pts: &[&[f64]]) -> Option<Ball> {
    let p0 = pts[0];
    let k = pts.len() - 1;
    let v: Vec<Vec<f64>> = pts[1..]
        .iter()
        .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // 2 V V^T lambda = |v_i|^2
    let mut m = vec![vec![0.0; k + 1]; k];
    let mut scale = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            m[i][j] = 2.0 * dot(&v[i], &v[j]);
        }
        m[i][k] = dot(&v[i], &v[i]);
        scale = scale.max(m[i][k]);
    }
    let lambda = solve(&mut m, k, 1e-12 * scale.max(f64::MIN_POSITIVE))?;
    let mut center = p0.to_vec();
    for (l, vi) in lambda.iter().zip(&v) {
        for (c, x) in center.iter_mut().zip(vi) {
            *c += l * x;
        }
    }
    let radius = pts
        .iter()
        .map(|p| super::euclidean(&center, p))
        .fold(0.0, f64::max);
    Some(Ball { center, radius })
}

/// Gaussian elimination with partial pivoting on an augmented `k x (k+1)`
/// matrix.
fn solve(m: &mut [Vec<f64>], k: usize, tol: f64) -> Option<Vec<f64>> {
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= tol {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][k] - s) / m[r][r];
    }
    Some(x)
}

/// Degenerate support: smallest circumball over subsets that covers all of
/// them.
fn fallback(pts: &[&[f64]]) -> Ball {
    let n = pts.len();
    let mut best: Option<Ball> = None;
    for mask in 1u32..(1 << n) {
        let sub: Vec<&[f64]> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| pts[i]).collect();
        let ball = if sub.len() == 1 {
            Ball {
                center: sub[0].to_vec(),
                radius: 0.0,
            }
        } else {
            match circumball(&sub) {
                Some(b) => b,
                None => continue,
            }
        };
        if pts.iter().all(|p| ball.contains(p, slack(ball.radius) * 1e3))
            && best.as_ref().is_none_or(|b| ball.radius < b.radius)
        {
            best = Some(ball);
        }
    }
    best.expect("a pair of distinct points always gives a covering ball")
}

/// `C_d r^d` for `d` in {2, 3}.
pub fn volume(ball: &Ball, dim: usize) -> Result<f64> {
    let c = match dim {
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => return Err(Error::bad_config(format!("volume needs dimension 2 or 3, got {dim}"))),
    };
    Ok(c * ball.radius.max(0.0).powi(dim as i32))
}
