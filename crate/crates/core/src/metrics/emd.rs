//! Earth mover's distance between equal-size clouds as a linear assignment:
//! an exact O(n³) Hungarian solver and an ε-scaling auction for larger inputs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{vec3, PointCloud};

pub const DEFAULT_EXACT_CAP: usize = 1024;

/// Mean transport cost and the bijection realising it:
/// `assignment[i]` is the ground-truth index matched to predicted point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    pub emd: f64,
    pub assignment: Vec<usize>,
}

fn check_sizes(pred: &PointCloud, gt: &PointCloud) -> Result<usize> {
    if pred.len() != gt.len() {
        return Err(Error::UnequalSizes(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty("EMD of empty clouds".into()));
    }
    Ok(pred.len())
}

fn cost_matrix(pred: &PointCloud, gt: &PointCloud) -> Vec<f64> {
    let n = pred.len();
    let mut c = Vec::with_capacity(n * n);
    for p in &pred.points {
        for g in &gt.points {
            c.push(vec3::dist(*p, *g));
        }
    }
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

pub fn emd_exact(pred: &PointCloud, gt: &PointCloud) -> Result<EmdResult> {
    emd_exact_with_cap(pred, gt, DEFAULT_EXACT_CAP)
}

pub fn emd_exact_with_cap(pred: &PointCloud, gt: &PointCloud, cap: usize) -> Result<EmdResult> {
    let n = check_sizes(pred, gt)?;
    if n > cap {
        return Err(Error::ExceedsExactCap { n, cap });
    }
    let cost = cost_matrix(pred, gt);
    let assignment = solve_assignment(&cost, n);
    Ok(EmdResult {
        emd: mean_cost(&cost, n, &assignment),
        assignment,
    })
}

/// Minimum-cost perfect matching on a dense row-major `n×n` cost matrix
/// (shortest augmenting paths with row/column potentials).
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

const SCALING_FACTOR: f64 = 5.0;

/// Auction assignment with ε-scaling. The returned mean cost is at most
/// `epsilon` above the optimum. The ε schedule depends only on the cost
/// matrix (ε_k = ε₀/5^k, stopping at the first ε_k ≤ `epsilon`) and the best
/// assignment over all phases is kept, so tightening `epsilon` never makes the
/// answer worse.
pub fn emd_approx(pred: &PointCloud, gt: &PointCloud, epsilon: f64) -> Result<EmdResult> {
    let n = check_sizes(pred, gt)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let cost = cost_matrix(pred, gt);
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    if n == 1 || max_cost == 0.0 {
        let assignment: Vec<usize> = (0..n).collect();
        return Ok(EmdResult {
            emd: mean_cost(&cost, n, &assignment),
            assignment,
        });
    }
    let mut prices = vec![0.0f64; n];
    let mut best: Option<EmdResult> = None;
    let mut eps = max_cost / 2.0;
    loop {
        let assignment = auction_phase(&cost, n, &mut prices, eps);
        let emd = mean_cost(&cost, n, &assignment);
        if best.as_ref().is_none_or(|b| emd < b.emd) {
            best = Some(EmdResult { emd, assignment });
        }
        if eps <= epsilon {
            break;
        }
        eps /= SCALING_FACTOR;
    }
    Ok(best.expect("at least one phase runs"))
}

/// One Gauss–Seidel auction round to completion at a fixed ε; prices carry
/// over between phases.
fn auction_phase(cost: &[f64], n: usize, prices: &mut [f64], eps: f64) -> Vec<usize> {
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    while let Some(i) = queue.pop_front() {
        let row = &cost[i * n..(i + 1) * n];
        // Benefit is -cost; find best and second-best net value.
        let mut best_j = 0;
        let mut best_v = f64::NEG_INFINITY;
        let mut second_v = f64::NEG_INFINITY;
        for j in 0..n {
            let val = -row[j] - prices[j];
            if val > best_v {
                second_v = best_v;
                best_v = val;
                best_j = j;
            } else if val > second_v {
                second_v = val;
            }
        }
        prices[best_j] += best_v - second_v + eps;
        if let Some(prev) = owner[best_j].replace(i) {
            assigned[prev] = None;
            queue.push_back(prev);
        }
        assigned[i] = Some(best_j);
    }
    assigned
        .into_iter()
        .map(|a| a.expect("auction ends with a full assignment"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pc(p: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(p.to_vec())
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect())
    }

    fn is_permutation(a: &[usize]) -> bool {
        let mut seen = vec![false; a.len()];
        a.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }

    /// Minimum over all permutations (Heap's algorithm).
    fn brute_force(pred: &PointCloud, gt: &PointCloud) -> f64 {
        let n = pred.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let cost = |perm: &[usize]| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| vec3::dist(pred.points[i], gt.points[j]))
                .sum::<f64>()
                / n as f64
        };
        let mut best = cost(&perm);
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(cost(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    #[test]
    fn identical_and_single_pair() {
        let a = pc(&[[0.0; 3], [1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]);
        let r = emd_exact(&a, &a).unwrap();
        assert_eq!(r.emd, 0.0);
        assert_eq!(r.assignment, vec![0, 1, 2]);
        let r = emd_exact(&pc(&[[0.0; 3]]), &pc(&[[3.0, 4.0, 0.0]])).unwrap();
        assert_eq!(r.emd, 5.0);
    }

    #[test]
    fn swapped_pair_matches_brute_force() {
        let p = pc(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let g = pc(&[[1.0, 0.0, 0.0], [0.0; 3]]);
        let r = emd_exact(&p, &g).unwrap();
        assert_eq!(r.emd, 0.0);
        assert_eq!(r.assignment, vec![1, 0]);
        assert_eq!(brute_force(&p, &g), 0.0);
    }

    #[test]
    fn size_and_cap_errors() {
        let a = pc(&[[0.0; 3]]);
        let b = pc(&[[0.0; 3], [1.0; 3]]);
        assert!(matches!(emd_exact(&a, &b), Err(Error::UnequalSizes(1, 2))));
        assert!(matches!(emd_approx(&a, &b, 1e-3), Err(Error::UnequalSizes(1, 2))));
        assert!(matches!(
            emd_exact_with_cap(&b, &b, 1),
            Err(Error::ExceedsExactCap { n: 2, cap: 1 })
        ));
    }

    #[test]
    fn exact_equals_exhaustive_for_small_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..10 {
                let p = random_cloud(&mut rng, n);
                let g = random_cloud(&mut rng, n);
                let r = emd_exact(&p, &g).unwrap();
                assert!(is_permutation(&r.assignment));
                assert!((r.emd - brute_force(&p, &g)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn approx_within_epsilon_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let p = random_cloud(&mut rng, 64);
            let g = random_cloud(&mut rng, 64);
            let exact = emd_exact(&p, &g).unwrap().emd;
            let approx = emd_approx(&p, &g, 1e-3).unwrap();
            assert!(is_permutation(&approx.assignment));
            assert!(approx.emd >= exact - 1e-12);
            assert!(approx.emd <= exact + 1e-3);
        }
        let a = random_cloud(&mut rng, 20);
        assert!(emd_approx(&a, &a, 1e-3).unwrap().emd <= 1e-3);
    }

    #[test]
    fn approx_gap_shrinks_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_cloud(&mut rng, 48);
        let g = random_cloud(&mut rng, 48);
        let exact = emd_exact(&p, &g).unwrap().emd;
        let mut prev = f64::INFINITY;
        for eps in [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let gap = emd_approx(&p, &g, eps).unwrap().emd - exact;
            assert!(gap <= prev + 1e-15, "eps {eps}: gap {gap} > {prev}");
            assert!(gap <= eps + 1e-12);
            prev = gap;
        }
    }
}
