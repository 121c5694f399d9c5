//! Clustering error up to label permutation, and subspace errors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hooi::FactorPair;
use crate::linalg::sin_theta;
use crate::netgen::LayerLabels;

/// Above this many groups the best label matching is found by the Hungarian
/// method instead of enumerating permutations.
pub const EXHAUSTIVE_MAX_GROUPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// Fraction of misclassified layers.
    pub r_bl: f64,
    pub mismatches: usize,
    /// `permutation[g]` is the true group matched to estimated group `g`.
    pub permutation: Vec<usize>,
    pub sin_theta_u: Option<f64>,
    pub sin_theta_w: Option<f64>,
}

/// `(2L)^{-1} min_P |S_hat - S P|_F^2`, which equals the fraction of layers
/// whose label disagrees with the truth under the best relabeling.
pub fn misclassification_rate(s_hat: &LayerLabels, s: &LayerLabels) -> Result<ErrorReport> {
    if s_hat.len() != s.len() {
        return Err(Error::Dimension(format!("label vectors of length {} and {}", s_hat.len(), s.len())));
    }
    if s.is_empty() {
        return Err(Error::Dimension("empty label vectors".into()));
    }
    let m = s_hat.num_groups().max(s.num_groups());
    let confusion = confusion_matrix(s_hat, s, m);
    let permutation = if m <= EXHAUSTIVE_MAX_GROUPS { best_matching_exhaustive(&confusion) } else { best_matching_hungarian(&confusion) };
    let agree: usize = permutation.iter().enumerate().map(|(a, &b)| confusion[a][b]).sum();
    let mismatches = s.len() - agree;
    Ok(ErrorReport {
        r_bl: mismatches as f64 / s.len() as f64,
        mismatches,
        permutation,
        sin_theta_u: None,
        sin_theta_w: None,
    })
}

pub fn is_perfect(s_hat: &LayerLabels, s: &LayerLabels) -> Result<bool> {
    Ok(misclassification_rate(s_hat, s)?.mismatches == 0)
}

/// `confusion[a][b]` counts layers with estimated group `a` and true group `b`.
pub fn confusion_matrix(s_hat: &LayerLabels, s: &LayerLabels, m: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0; m]; m];
    for (&a, &b) in s_hat.as_slice().iter().zip(s.as_slice()) {
        c[a][b] += 1;
    }
    c
}

/// Permutation maximizing the matched count; the lexicographically first
/// optimum is returned.
pub fn best_matching_exhaustive(confusion: &[Vec<usize>]) -> Vec<usize> {
    fn search(c: &[Vec<usize>], row: usize, used: &mut [bool], cur: &mut Vec<usize>, score: usize, best: &mut (usize, Vec<usize>)) {
        if row == c.len() {
            if best.1.is_empty() || score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        for col in 0..c.len() {
            if !used[col] {
                used[col] = true;
                cur.push(col);
                search(c, row + 1, used, cur, score + c[row][col], best);
                cur.pop();
                used[col] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    search(confusion, 0, &mut vec![false; confusion.len()], &mut Vec::new(), 0, &mut best);
    best.1
}

/// Maximum-weight perfect matching by the Hungarian method, `O(m^3)`.
pub fn best_matching_hungarian(confusion: &[Vec<usize>]) -> Vec<usize> {
    let m = confusion.len();
    let max = confusion.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimize max - c, 1-based potentials
    let cost = |i: usize, j: usize| max - confusion[i - 1][j - 1] as i64;
    let mut u = vec![0i64; m + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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
    let mut perm = vec![0; m];
    for j in 1..=m {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Spectral `sin Theta` distances for both factors.
pub fn subspace_errors(truth: &FactorPair, est: &FactorPair) -> Result<(f64, f64)> {
    Ok((sin_theta(&truth.u, &est.u)?.spectral, sin_theta(&truth.w, &est.w)?.spectral))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::random_orthonormal;
    use crate::linalg::OrthonormalFactor;
    use crate::Matrix;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[usize], m: usize) -> LayerLabels {
        LayerLabels::new(v.to_vec(), m).unwrap()
    }

    /// `(2L)^{-1} min_P |S_hat - S P|_F^2` over explicit one-hot matrices.
    fn frobenius_oracle(s_hat: &[usize], s: &[usize], m: usize) -> f64 {
        let l = s.len();
        let one_hot = |v: &[usize]| Matrix::from_fn(l, m, |i, g| if v[i] == g { 1.0 } else { 0.0 });
        let (sh, st) = (one_hot(s_hat), one_hot(s));
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let pm = Matrix::from_fn(m, m, |a, b| if p[a] == b { 1.0 } else { 0.0 });
            best = best.min((&sh - &st * pm).norm_squared());
        });
        best / (2.0 * l as f64)
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn examples() {
        let s = labels(&[0, 0, 1, 1], 2);
        assert_eq!(misclassification_rate(&s, &s).unwrap().r_bl, 0.0);
        let swapped = labels(&[1, 1, 0, 0], 2);
        assert_eq!(misclassification_rate(&swapped, &s).unwrap().r_bl, 0.0);
        assert_eq!(misclassification_rate(&swapped, &s).unwrap().permutation, vec![1, 0]);
        let one_off = labels(&[0, 0, 1, 0], 2);
        let r = misclassification_rate(&one_off, &s).unwrap();
        assert_eq!(r.r_bl, 0.25);
        assert_eq!(r.mismatches, 1);
        assert_abs_diff_eq!(frobenius_oracle(&[0, 0, 1, 0], &[0, 0, 1, 1], 2), 0.25);

        assert!(is_perfect(&s, &s).unwrap());
        assert!(is_perfect(&swapped, &s).unwrap());
        assert!(!is_perfect(&one_off, &s).unwrap());
    }

    #[test]
    fn length_mismatch() {
        assert!(misclassification_rate(&labels(&[0, 1], 2), &labels(&[0, 1, 1], 2)).is_err());
    }

    #[test]
    fn hungarian_used_for_many_groups() {
        let m = 10;
        let s: Vec<usize> = (0..40).map(|i| i % m).collect();
        let s_hat: Vec<usize> = s.iter().map(|g| (g + 3) % m).collect();
        let r = misclassification_rate(&labels(&s_hat, m), &labels(&s, m)).unwrap();
        assert_eq!(r.mismatches, 0);
        assert_eq!(r.permutation[3], 0);
    }

    #[test]
    fn subspace_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_orthonormal(10, 2, &mut rng);
        let w = random_orthonormal(8, 3, &mut rng);
        let truth = FactorPair { u: u.clone(), w: w.clone(), iterations_run: 0, final_eps: 0.0 };
        let (eu, ew) = subspace_errors(&truth, &truth).unwrap();
        assert!(eu < 1e-12 && ew < 1e-12);
        let q = crate::linalg::testing::random_rotation(2, &mut rng);
        let rotated = FactorPair { u: u.rotate(&q).unwrap(), ..truth.clone() };
        let (eu, ew) = subspace_errors(&truth, &rotated).unwrap();
        assert!(eu < 1e-10 && ew < 1e-10);

        let th = std::f64::consts::FRAC_PI_6;
        let e = OrthonormalFactor::new(Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let tilted = OrthonormalFactor::new(Matrix::from_row_slice(3, 1, &[th.cos(), th.sin(), 0.0])).unwrap();
        let a = FactorPair { u: e.clone(), w: e, iterations_run: 0, final_eps: 0.0 };
        let b = FactorPair { u: tilted.clone(), w: tilted, iterations_run: 0, final_eps: 0.0 };
        let (eu, ew) = subspace_errors(&a, &b).unwrap();
        assert_abs_diff_eq!(eu, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ew, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn hungarian_agrees_with_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let m = rng.random_range(1..=5);
            let l = rng.random_range(1..30);
            let s: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let s_hat: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let c = confusion_matrix(&labels(&s_hat, m), &labels(&s, m), m);
            let score = |p: &[usize]| p.iter().enumerate().map(|(a, &b)| c[a][b]).sum::<usize>();
            assert_eq!(score(&best_matching_hungarian(&c)), score(&best_matching_exhaustive(&c)));
        }
    }

    proptest! {
        #[test]
        fn matches_frobenius_definition(seed in any::<u64>(), m in 1usize..=4, l in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let s_hat: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let r = misclassification_rate(&labels(&s_hat, m), &labels(&s, m)).unwrap();
            prop_assert!((r.r_bl - frobenius_oracle(&s_hat, &s, m)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.r_bl));
            prop_assert!((r.r_bl * l as f64 - r.mismatches as f64).abs() < 1e-9);
        }

        #[test]
        fn symmetric_under_relabeling(seed in any::<u64>(), m in 1usize..=5, l in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let s_hat: Vec<usize> = (0..l).map(|_| rng.random_range(0..m)).collect();
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng);
            let relabeled: Vec<usize> = s_hat.iter().map(|&g| p[g]).collect();
            let base = misclassification_rate(&labels(&s_hat, m), &labels(&s, m)).unwrap().r_bl;
            prop_assert_eq!(base, misclassification_rate(&labels(&relabeled, m), &labels(&s, m)).unwrap().r_bl);
            prop_assert_eq!(base, misclassification_rate(&labels(&s, m), &labels(&s_hat, m)).unwrap().r_bl);
        }
    }
}
