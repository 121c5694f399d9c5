//! Between-layer clustering.
//!
//! [`cluster_tensor`] thresholds the row inner products of the layer factor
//! and runs k-means on the leading eigenvectors of the resulting 0/1 matrix.
//! [`cluster_baseline`] fits each layer separately and clusters layers by the
//! overlap of their estimated node subspaces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KmeansConfig};
use crate::linalg::{self, OrthonormalFactor};
use crate::netgen::LayerLabels;
use crate::tensor::{center, SignedAdjacencyTensor};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `(M/L) R(n, L)` with unit constants.
    FormulaT,
    /// Two-class split of the off-diagonal magnitudes that maximizes the
    /// between-class variance.
    #[default]
    GapAdaptive,
    /// Midpoint of the widest gap between consecutive sorted magnitudes.
    LargestGap,
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub m: usize,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    /// Approximation slack of the k-means step. Reported, not certified.
    #[serde(default = "default_eps")]
    pub kmeans_eps: f64,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_iters")]
    pub kmeans_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eps() -> f64 {
    0.01
}
fn default_restarts() -> usize {
    20
}
fn default_iters() -> usize {
    100
}

impl ClusterConfig {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            threshold_mode: ThresholdMode::default(),
            kmeans_eps: default_eps(),
            kmeans_restarts: default_restarts(),
            kmeans_iters: default_iters(),
            seed: 0,
        }
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.m == 0 || self.m > layers {
            return Err(Error::InvalidParameter(format!("M = {} must be in 1..={layers}", self.m)));
        }
        if let ThresholdMode::Manual(t) = self.threshold_mode {
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("manual threshold {t} must be >= 0")));
            }
        }
        if !(self.kmeans_eps >= 0.0) || self.kmeans_restarts == 0 {
            return Err(Error::InvalidParameter("k-means needs eps >= 0 and at least one restart".into()));
        }
        Ok(())
    }

    fn kmeans(&self) -> KmeansConfig {
        KmeansConfig { restarts: self.kmeans_restarts, max_iters: self.kmeans_iters }
    }
}

/// Problem size needed by the formula threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterContext {
    pub n: usize,
    pub layers: usize,
    pub m: usize,
    pub k: usize,
    pub rho_hat: f64,
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub labels: LayerLabels,
    /// `W W^T` for the tensor method, subspace overlaps for the baseline.
    pub score_matrix: Matrix,
    pub threshold_used: Option<f64>,
}

/// `W W^T`.
pub fn gram_rows(w: &OrthonormalFactor) -> Matrix {
    w.matrix() * w.matrix().transpose()
}

/// `T = (M / L) R(n, L)` with
/// `R = (KM)^{3/2} log^4 n loglog n / sqrt(rho n min(n, L)) + KM log^{3/2} n sqrt(loglog n) / sqrt(n)`.
pub fn formula_threshold(n: usize, layers: usize, m: usize, k: usize, rho_hat: f64) -> Result<f64> {
    if n < 3 || layers < 2 {
        // log log n is negative below n = 3
        return Err(Error::InvalidParameter(format!("formula threshold needs n >= 3 and L >= 2, got n = {n}, L = {layers}")));
    }
    if !(rho_hat > 0.0 && rho_hat <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho_hat = {rho_hat} must be in (0, 1]")));
    }
    let (nf, lf) = (n as f64, layers as f64);
    let km = (k * m) as f64;
    let ln = nf.ln();
    let lln = ln.ln();
    let r = km.powf(1.5) * ln.powi(4) * lln / (rho_hat * nf * nf.min(lf)).sqrt() + km * ln.powf(1.5) * lln.sqrt() / nf.sqrt();
    Ok(m as f64 / lf * r)
}

fn off_diagonal_magnitudes(y: &Matrix) -> Result<Vec<f64>> {
    let l = y.nrows();
    if l < 2 || y.ncols() != l {
        return Err(Error::Dimension(format!("threshold needs a square matrix with L >= 2, got {:?}", y.shape())));
    }
    let vals: Vec<f64> = (0..l).flat_map(|j| (0..j).map(move |i| (i, j))).map(|(i, j)| y[(i, j)].abs()).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("threshold input"));
    }
    Ok(vals)
}

/// Splits the sorted values of `|Y(l1, l2)|`, `l1 < l2`, into a high and a
/// low class maximizing the between-class variance, and returns the midpoint
/// of the two values at the boundary. The first (largest-valued) boundary
/// wins ties.
pub fn gap_threshold(y: &Matrix) -> Result<f64> {
    two_class_midpoint(&mut off_diagonal_magnitudes(y)?)
}

/// Literal widest-gap rule on `|Y(l1, l2)|`, `l1 < l2`.
pub fn largest_gap_threshold(y: &Matrix) -> Result<f64> {
    sorted_gap_midpoint(&mut off_diagonal_magnitudes(y)?)
}

/// Two-class split on a plain list of magnitudes.
pub fn two_class_midpoint(vals: &mut [f64]) -> Result<f64> {
    vals.sort_by(|a, b| b.total_cmp(a));
    let n = vals.len();
    let total: f64 = vals.iter().sum();
    let mut head = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..n.saturating_sub(1) {
        head += vals[i];
        if vals[i] == vals[i + 1] {
            continue;
        }
        let (n0, n1) = ((i + 1) as f64, (n - i - 1) as f64);
        let diff = head / n0 - (total - head) / n1;
        let score = n0 * n1 * diff * diff;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    match best {
        Some((_, i)) => Ok(0.5 * (vals[i] + vals[i + 1])),
        None => Err(Error::IndeterminateThreshold("all off-diagonal magnitudes are equal".into())),
    }
}

/// Widest-gap rule on a plain list of magnitudes.
pub fn sorted_gap_midpoint(vals: &mut [f64]) -> Result<f64> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("threshold input"));
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut best: Option<(f64, usize)> = None;
    for i in 0..vals.len().saturating_sub(1) {
        let gap = vals[i] - vals[i + 1];
        if best.is_none_or(|(g, _)| gap > g) {
            best = Some((gap, i));
        }
    }
    match best {
        Some((g, i)) if g > 0.0 => Ok(0.5 * (vals[i] + vals[i + 1])),
        _ => Err(Error::IndeterminateThreshold("all off-diagonal magnitudes are equal".into())),
    }
}

/// Clusters layers from the estimated layer factor.
pub fn cluster_tensor(w: &OrthonormalFactor, cfg: &ClusterConfig, ctx: &ClusterContext) -> Result<ClusteringResult> {
    let layers = w.nrows();
    cfg.validate(layers)?;
    let y = gram_rows(w);
    let t = match cfg.threshold_mode {
        ThresholdMode::Manual(t) => t,
        ThresholdMode::GapAdaptive => gap_threshold(&y)?,
        ThresholdMode::LargestGap => largest_gap_threshold(&y)?,
        ThresholdMode::FormulaT => formula_threshold(ctx.n, ctx.layers, ctx.m, ctx.k, ctx.rho_hat)?,
    };
    let labels = if cfg.m == 1 {
        LayerLabels::new(vec![0; layers], 1)?
    } else {
        let x = y.map(|v| if v.abs() > t { 1.0 } else { 0.0 });
        spectral_labels(&x, cfg)?
    };
    Ok(ClusteringResult { labels, score_matrix: y, threshold_used: Some(t) })
}

/// k-means on the rows of the leading `M` eigenvectors of a symmetric score
/// matrix.
fn spectral_labels(scores: &Matrix, cfg: &ClusterConfig) -> Result<LayerLabels> {
    let v = linalg::svd_left_symmetric(scores, cfg.m)?;
    let res = kmeans(v.matrix(), cfg.m, &cfg.kmeans(), cfg.seed)?;
    LayerLabels::new(res.labels, cfg.m)
}

/// Per-layer spectral baseline. `k_per_layer[l]` is the node-subspace
/// dimension fitted to layer `l`.
pub fn cluster_baseline(a: &SignedAdjacencyTensor, k_per_layer: &[usize], cfg: &ClusterConfig) -> Result<ClusteringResult> {
    let layers = a.layers();
    cfg.validate(layers)?;
    if k_per_layer.len() != layers {
        return Err(Error::Dimension(format!("{} subspace dimensions for {layers} layers", k_per_layer.len())));
    }
    let centered = center(a.tensor())?;
    let factors: Vec<OrthonormalFactor> = (0..layers)
        .into_par_iter()
        .map(|l| linalg::svd_left_symmetric(&centered.slice(l).into_owned(), k_per_layer[l]))
        .collect::<Result<_>>()?;
    let theta = subspace_overlaps(&factors);
    let labels = if cfg.m == 1 { LayerLabels::new(vec![0; layers], 1)? } else { spectral_labels(&theta, cfg)? };
    Ok(ClusteringResult { labels, score_matrix: theta, threshold_used: None })
}

/// `Theta(l1, l2) = |U_l1^T U_l2|_F^2 = <vec(U_l1 U_l1^T), vec(U_l2 U_l2^T)>`.
pub fn subspace_overlaps(factors: &[OrthonormalFactor]) -> Matrix {
    let l = factors.len();
    let cols: Vec<Vec<f64>> = (0..l)
        .into_par_iter()
        .map(|j| (0..l).map(|i| (factors[i].matrix().transpose() * factors[j].matrix()).norm_squared()).collect())
        .collect();
    Matrix::from_fn(l, l, |i, j| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hooi::true_factors;
    use crate::linalg::testing::{gaussian, random_orthonormal, random_rotation};
    use crate::metrics::misclassification_rate;
    use crate::netgen::{build_ground_truth, LatentDist, ModelConfig};
    use crate::tensor::Tensor3;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(layers: usize) -> ClusterContext {
        ClusterContext { n: 100, layers, m: 3, k: 3, rho_hat: 0.02 }
    }

    fn gaussian_model(n: usize, layers: usize, b: (f64, f64), seed: u64) -> ModelConfig {
        ModelConfig {
            n,
            layers,
            k: vec![3, 3, 3],
            pi: vec![],
            latent: LatentDist::TruncatedNormal { sigma: 1.0, covariance: None },
            b_range: b,
            seed,
        }
    }

    #[test]
    fn gram_rows_examples() {
        let w = OrthonormalFactor::new(Matrix::identity(5, 5)).unwrap();
        assert_eq!(gram_rows(&w), Matrix::identity(5, 5));

        let s = 0.5f64.sqrt();
        let w = OrthonormalFactor::new(Matrix::from_row_slice(3, 2, &[s, 0.0, s, 0.0, 0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(gram_rows(&w)[(0, 1)], 0.5, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_orthonormal(6, 3, &mut rng);
        let y = gram_rows(&w);
        for a in 0..6 {
            for b in 0..6 {
                let mut dot = 0.0;
                for c in 0..3 {
                    dot += w.matrix()[(a, c)] * w.matrix()[(b, c)];
                }
                assert!((y[(a, b)] - dot).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn formula_threshold_regression_value() {
        let t = formula_threshold(100, 100, 3, 3, 0.02).unwrap();
        // direct evaluation
        let ln: f64 = 100f64.ln();
        let lln = ln.ln();
        let r = 27f64 * ln.powi(4) * lln / (0.02f64 * 100.0 * 100.0).sqrt() + 9.0 * ln.powf(1.5) * lln.sqrt() / 10.0;
        assert_abs_diff_eq!(t, 0.03 * r, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 39.670_516_519_98, epsilon = 1e-9);
    }

    #[test]
    fn formula_threshold_monotonicity() {
        let base = formula_threshold(200, 150, 2, 3, 0.05).unwrap();
        assert!(formula_threshold(200, 150, 4, 3, 0.05).unwrap() > 2.0 * base);
        assert!(formula_threshold(200, 150, 2, 3, 0.2).unwrap() < base);
        assert!(formula_threshold(200, 150, 2, 3, 0.0).is_err());
        assert!(formula_threshold(2, 150, 2, 3, 0.1).is_err());
    }

    #[test]
    fn gap_threshold_examples() {
        for rule in [two_class_midpoint, sorted_gap_midpoint] {
            let mut v = [0.9, 0.8, 0.01, 0.02];
            assert_abs_diff_eq!(rule(&mut v).unwrap(), 0.41, epsilon = 1e-15);
            let mut two = [1.0, 0.0];
            assert_eq!(rule(&mut two).unwrap(), 0.5);
            let mut flat = [0.5; 6];
            assert!(matches!(rule(&mut flat), Err(Error::IndeterminateThreshold(_))));
            // symmetric tie: earliest boundary
            let mut tie = [1.0, 0.5, 0.0];
            assert_eq!(rule(&mut tie).unwrap(), 0.75);
        }
        let y = Matrix::from_element(4, 4, 0.5);
        assert!(matches!(gap_threshold(&y), Err(Error::IndeterminateThreshold(_))));
        assert!(matches!(largest_gap_threshold(&y), Err(Error::IndeterminateThreshold(_))));
        let y = Matrix::from_row_slice(3, 3, &[1.0, 0.9, 0.01, 0.9, 1.0, 0.02, 0.01, 0.02, 1.0]);
        assert_abs_diff_eq!(gap_threshold(&y).unwrap(), 0.46, epsilon = 1e-15);
    }

    #[test]
    fn two_class_split_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let mut v: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) / 20.0).collect();
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut best: Option<(f64, f64)> = None;
            for cut in 1..n {
                if sorted[cut - 1] == sorted[cut] {
                    continue;
                }
                let (hi, lo) = sorted.split_at(cut);
                let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
                let all = mean(&sorted);
                let score = hi.len() as f64 * (mean(hi) - all).powi(2) + lo.len() as f64 * (mean(lo) - all).powi(2);
                if best.is_none_or(|(s, _)| score > s + 1e-12) {
                    best = Some((score, 0.5 * (sorted[cut - 1] + sorted[cut])));
                }
            }
            match best {
                Some((_, t)) => assert_abs_diff_eq!(two_class_midpoint(&mut v).unwrap(), t, epsilon = 1e-12),
                None => assert!(two_class_midpoint(&mut v).is_err()),
            }
        }
    }

    #[test]
    fn noiseless_block_pattern_recovered() {
        let gt = build_ground_truth(&gaussian_model(60, 30, (-0.05, 0.05), 2)).unwrap();
        let w = true_factors(&gt).unwrap().w;
        let mut cfg = ClusterConfig::new(3);
        cfg.threshold_mode = ThresholdMode::Manual(3.0 / 30.0 / 2.0);
        let res = cluster_tensor(&w, &cfg, &ctx(30)).unwrap();
        assert_eq!(misclassification_rate(&res.labels, &gt.labels).unwrap().mismatches, 0);
    }

    #[test]
    fn single_group_is_all_one_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_orthonormal(12, 4, &mut rng);
        let res = cluster_tensor(&w, &ClusterConfig::new(1), &ctx(12)).unwrap();
        assert!(res.labels.as_slice().iter().all(|&g| g == 0));
    }

    #[test]
    fn orthogonal_rows_give_singletons() {
        let w = OrthonormalFactor::new(Matrix::identity(4, 4)).unwrap();
        let mut cfg = ClusterConfig::new(4);
        cfg.threshold_mode = ThresholdMode::Manual(0.5);
        let res = cluster_tensor(&w, &cfg, &ctx(4)).unwrap();
        let mut g = res.labels.as_slice().to_vec();
        g.sort();
        assert_eq!(g, vec![0, 1, 2, 3]);
    }

    fn symmetric_tensor_from(slices: &[Matrix]) -> SignedAdjacencyTensor {
        SignedAdjacencyTensor::new(Tensor3::from_slices(slices).unwrap()).unwrap()
    }

    #[test]
    fn baseline_identical_layers_overlap_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20;
        let g = gaussian(n, n, &mut rng);
        let s = Matrix::from_fn(n, n, |i, j| {
            let v = g[(i.min(j), i.max(j))];
            if i == j { 0.0 } else if v > 0.5 { 1.0 } else if v < -0.5 { -1.0 } else { 0.0 }
        });
        let a = symmetric_tensor_from(&[s.clone(), s]);
        let res = cluster_baseline(&a, &[3, 3], &ClusterConfig::new(1)).unwrap();
        assert_abs_diff_eq!(res.score_matrix[(0, 1)], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn baseline_orthogonal_subspaces_overlap_zero() {
        let f1 = OrthonormalFactor::new(Matrix::from_fn(6, 2, |i, j| if i == j { 1.0 } else { 0.0 })).unwrap();
        let f2 = OrthonormalFactor::new(Matrix::from_fn(6, 2, |i, j| if i == j + 3 { 1.0 } else { 0.0 })).unwrap();
        let theta = subspace_overlaps(&[f1, f2]);
        assert_eq!(theta[(0, 1)], 0.0);
        assert_abs_diff_eq!(theta[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn overlap_matches_vectorized_projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fs: Vec<_> = (0..4).map(|_| random_orthonormal(10, 3, &mut rng)).collect();
        let theta = subspace_overlaps(&fs);
        for a in 0..4 {
            for b in 0..4 {
                let pa = fs[a].projector();
                let pb = fs[b].projector();
                let dot: f64 = pa.iter().zip(pb.iter()).map(|(x, y)| x * y).sum();
                assert!((theta[(a, b)] - dot).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_gap_adaptive_recovery() {
        for seed in 0..5 {
            let gt = build_ground_truth(&gaussian_model(80, 60, (-0.05, 0.05), 100 + seed)).unwrap();
            let w = true_factors(&gt).unwrap().w;
            let res = cluster_tensor(&w, &ClusterConfig::new(3), &ctx(60)).unwrap();
            assert_eq!(misclassification_rate(&res.labels, &gt.labels).unwrap().r_bl, 0.0, "seed {seed}");
        }
    }

    fn planted_w(seed: u64) -> (OrthonormalFactor, LayerLabels) {
        // with few layers per group the within-group pattern is too weak to threshold
        let gt = build_ground_truth(&gaussian_model(60, 60, (-0.05, 0.05), seed)).unwrap();
        (true_factors(&gt).unwrap().w, gt.labels)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn gram_rows_psd(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = gram_rows(&random_orthonormal(15, 4, &mut rng));
            prop_assert!(y.symmetric_eigenvalues().min() >= -1e-10);
            prop_assert_eq!(&y, &y.transpose());
        }

        #[test]
        fn rotation_invariance(seed in 0u64..1000) {
            let (w, _) = planted_w(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_rotation(w.rank(), &mut rng);
            let cfg = ClusterConfig::new(3);
            let a = cluster_tensor(&w, &cfg, &ctx(60)).unwrap();
            let b = cluster_tensor(&w.rotate(&q).unwrap(), &cfg, &ctx(60)).unwrap();
            prop_assert_eq!(misclassification_rate(&a.labels, &b.labels).unwrap().mismatches, 0);
        }

        #[test]
        fn layer_permutation_equivariance(seed in 0u64..1000) {
            let (w, _) = planted_w(seed);
            let mut perm: Vec<usize> = (0..60).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let cfg = ClusterConfig::new(3);
            let a = cluster_tensor(&w, &cfg, &ctx(60)).unwrap();
            let b = cluster_tensor(&w.permute_rows(&perm), &cfg, &ctx(60)).unwrap();
            let permuted = LayerLabels::new(perm.iter().map(|&p| a.labels.group(p)).collect(), 3).unwrap();
            prop_assert_eq!(misclassification_rate(&permuted, &b.labels).unwrap().mismatches, 0);
        }
    }
}
