//! Earth Mover's Distance between equal-size clouds:
//! `EMD(A, B) = 1/|A| · min over bijections φ of Σ ‖a − φ(a)‖₂`.
//!
//! [`emd_approx`] solves the assignment with the forward auction algorithm
//! under ε-scaling. The final ε is tied to a lower bound on the optimum (the
//! mean of per-point nearest distances), so the returned value is never more
//! than 1% above the exact minimum. [`emd_exact`] runs the O(n³) Hungarian
//! algorithm and serves as the reference.

use super::nn::dist2;
use super::MetricError;
use crate::geometry::PointCloud3;

/// Largest set size accepted by [`emd_exact`].
pub const EMD_EXACT_MAX: usize = 256;

/// Relative accuracy target of the auction relative to the lower bound.
const AUCTION_REL_EPS: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EmdOptions {
    /// When sizes differ, subsample the larger cloud at evenly strided
    /// indices `⌊i·L/S⌋` down to the smaller size instead of failing.
    pub resample: bool,
}

fn cost_matrix(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<f64> {
    let n = b.len();
    let mut c = Vec::with_capacity(a.len() * n);
    for p in a {
        for q in b {
            c.push(dist2(p, q).sqrt());
        }
    }
    debug_assert_eq!(c.len(), a.len() * n);
    c
}

fn mean_cost(cost: &[f64], n: usize, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum::<f64>()
        / n as f64
}

fn strided(points: &[[f64; 3]], size: usize) -> Vec<[f64; 3]> {
    let len = points.len();
    (0..size).map(|i| points[i * len / size]).collect()
}

pub fn emd_approx(a: &PointCloud3, b: &PointCloud3) -> Result<f64, MetricError> {
    emd_approx_with(a, b, EmdOptions::default())
}

pub fn emd_approx_with(
    a: &PointCloud3,
    b: &PointCloud3,
    opts: EmdOptions,
) -> Result<f64, MetricError> {
    let (pa, pb) = (a.points(), b.points());
    if pa.len() != pb.len() {
        if !opts.resample {
            return Err(MetricError::SizeMismatch(pa.len(), pb.len()));
        }
        let s = pa.len().min(pb.len());
        let (ra, rb) = (strided(pa, s), strided(pb, s));
        return Ok(auction_emd(&ra, &rb));
    }
    Ok(auction_emd(pa, pb))
}

fn auction_emd(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let n = a.len();
    let cost = cost_matrix(a, b);
    let lower_bound = (0..n)
        .map(|i| {
            cost[i * n..(i + 1) * n]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64;
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let eps = (AUCTION_REL_EPS * lower_bound).max(1e-9 * max_cost / n as f64);
    let assignment = auction_assignment(&cost, n, eps);
    mean_cost(&cost, n, &assignment)
}

/// Minimum-cost assignment by auction with ε-scaling. `cost` is row-major
/// n×n; returns the object assigned to each person. The total cost is within
/// `n · eps_final` of the optimum.
pub fn auction_assignment(cost: &[f64], n: usize, eps_final: f64) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 1 {
        return vec![0];
    }
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    if max_cost == 0.0 {
        return (0..n).collect();
    }
    let eps_final = eps_final.max(f64::EPSILON * max_cost);
    let mut prices = vec![0.0; n];
    let mut eps = (max_cost / 4.0).max(eps_final);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        assigned.iter_mut().for_each(|a| *a = None);
        let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
        while let Some(i) = queue.pop_front() {
            let row = &cost[i * n..(i + 1) * n];
            let (mut best, mut best_v, mut second_v) = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 0..n {
                let v = -row[j] - prices[j];
                if v > best_v {
                    second_v = best_v;
                    best_v = v;
                    best = j;
                } else if v > second_v {
                    second_v = v;
                }
            }
            prices[best] += best_v - second_v + eps;
            if let Some(prev) = owner[best].replace(i) {
                assigned[prev] = None;
                queue.push_back(prev);
            }
            assigned[i] = Some(best);
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / 5.0).max(eps_final);
    }
    assigned
        .into_iter()
        .map(|a| a.expect("auction leaves every person assigned"))
        .collect()
}

/// Exact minimum-cost perfect matching (Hungarian algorithm with
/// potentials). `cost` is row-major n×n.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

pub fn emd_exact(a: &PointCloud3, b: &PointCloud3) -> Result<f64, MetricError> {
    let n = a.len();
    if n != b.len() {
        return Err(MetricError::SizeMismatch(n, b.len()));
    }
    if n > EMD_EXACT_MAX {
        return Err(MetricError::TooLarge {
            got: n,
            max: EMD_EXACT_MAX,
        });
    }
    let cost = cost_matrix(a.points(), b.points());
    Ok(mean_cost(&cost, n, &hungarian(&cost, n)))
}
