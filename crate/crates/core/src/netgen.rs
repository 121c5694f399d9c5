//! Synthetic multiplex networks.
//!
//! Layers are assigned to groups by i.i.d. multinomial draws. Every group `m`
//! owns a latent matrix `X_m` (`n x K_m`, rows in the closed unit ball) and
//! every layer `l` a symmetric loading matrix `B_l` with i.i.d. uniform upper
//! triangle. The probability slice of layer `l` in group `m` is
//! `P_l = X_m B_l X_m^T` with the diagonal removed, and the observed edge
//! `A_l(i, j)` is `sign(P_l(i, j))` with probability `|P_l(i, j)|`.
//!
//! Sparsity is controlled only through the loading range `(c, d)`.

use nalgebra::DMatrixViewMut;
use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::{ProbabilityTensor, SignedAdjacencyTensor, Tensor3};
use crate::Matrix;

/// Layer-to-group map. Groups are stored zero-based (`0..M`); file exports
/// shift to one-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerLabels {
    groups: Vec<usize>,
    num_groups: usize,
}

impl LayerLabels {
    pub fn new(groups: Vec<usize>, num_groups: usize) -> Result<Self> {
        if num_groups == 0 {
            return Err(Error::InvalidParameter("at least one group required".into()));
        }
        if let Some((l, g)) = groups.iter().enumerate().find(|(_, &g)| g >= num_groups) {
            return Err(Error::InvalidParameter(format!("layer {l} has group {g} >= M = {num_groups}")));
        }
        Ok(Self { groups, num_groups })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, l: usize) -> usize {
        self.groups[l]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_groups];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }

    /// Labels in `1..=M`.
    pub fn one_based(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g + 1).collect()
    }
}

/// Row distribution of the latent matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentDist {
    /// `eta / |eta|` with `eta ~ N(0, Sigma)`. `Sigma = sigma^2 I` unless a
    /// row-major `K x K` covariance is supplied.
    TruncatedNormal {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<f64>>,
    },
    /// First `K` coordinates of a single multinomial trial over `K + 1`
    /// categories. A single weight is broadcast to all `K + 1` categories.
    MultinomialFirstK { weights: Vec<f64> },
    /// First `K` coordinates of a `Dirichlet(alpha)` draw on `K + 1`
    /// components. A single alpha is broadcast.
    DirichletFirstK { alpha: Vec<f64> },
}

impl LatentDist {
    pub fn name(&self) -> &'static str {
        match self {
            LatentDist::TruncatedNormal { .. } => "truncated_normal",
            LatentDist::MultinomialFirstK { .. } => "multinomial",
            LatentDist::DirichletFirstK { .. } => "dirichlet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub layers: usize,
    /// Ambient dimension `K_m` of every group; its length is `M`.
    pub k: Vec<usize>,
    /// Group probabilities; empty means uniform.
    #[serde(default)]
    pub pi: Vec<f64>,
    pub latent: LatentDist,
    /// Loading entries are `Uniform(c, d)`.
    pub b_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn num_groups(&self) -> usize {
        self.k.len()
    }

    /// `pi`, with the empty default expanded to the uniform vector.
    pub fn group_probabilities(&self) -> Vec<f64> {
        if self.pi.is_empty() {
            vec![1.0 / self.num_groups() as f64; self.num_groups()]
        } else {
            self.pi.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.layers < 1 {
            return Err(Error::InvalidParameter(format!(
                "need n >= 2 and L >= 1, got n = {}, L = {}",
                self.n, self.layers
            )));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::InvalidParameter("every K_m must be at least 1".into()));
        }
        validate_probabilities(&self.group_probabilities())?;
        if !self.pi.is_empty() && self.pi.len() != self.k.len() {
            return Err(Error::InvalidParameter("pi and K have different lengths".into()));
        }
        let (c, d) = self.b_range;
        if !(c.is_finite() && d.is_finite()) || c > d {
            return Err(Error::InvalidParameter(format!("loading range needs c <= d, got ({c}, {d})")));
        }
        Ok(())
    }
}

fn validate_probabilities(pi: &[f64]) -> Result<()> {
    if pi.is_empty() || pi.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("probabilities must be positive: {pi:?}")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Draws `L` i.i.d. group labels from `pi`.
pub fn sample_labels(pi: &[f64], layers: usize, rng: &mut impl Rng) -> Result<LayerLabels> {
    validate_probabilities(pi)?;
    let dist = WeightedIndex::new(pi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let groups = (0..layers).map(|_| dist.sample(rng)).collect();
    LayerLabels::new(groups, pi.len())
}

fn broadcast(params: &[f64], k: usize, what: &str) -> Result<Vec<f64>> {
    match params.len() {
        1 => Ok(vec![params[0]; k + 1]),
        len if len == k + 1 => Ok(params.to_vec()),
        len => Err(Error::InvalidParameter(format!("{what} has {len} entries, expected 1 or K + 1 = {}", k + 1))),
    }
}

/// `n x k` latent matrix with i.i.d. rows from `dist`.
pub fn sample_latent(dist: &LatentDist, n: usize, k: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let mut x = Matrix::zeros(n, k);
    match dist {
        LatentDist::TruncatedNormal { sigma, covariance } => {
            if !(*sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
            }
            let chol = match covariance {
                Some(cov) => {
                    if cov.len() != k * k {
                        return Err(Error::InvalidParameter(format!("covariance must be {k}x{k}")));
                    }
                    let m = Matrix::from_row_slice(k, k, cov);
                    let c = m
                        .cholesky()
                        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
                    Some(c.l())
                }
                None => None,
            };
            for i in 0..n {
                loop {
                    let z = nalgebra::DVector::<f64>::from_fn(k, |_, _| rng.sample(StandardNormal));
                    let eta = match &chol {
                        Some(l) => l * z,
                        None => z * *sigma,
                    };
                    let norm = eta.norm();
                    if norm > 0.0 {
                        x.row_mut(i).copy_from(&(eta / norm).transpose());
                        break;
                    }
                }
            }
        }
        LatentDist::MultinomialFirstK { weights } => {
            let w = broadcast(weights, k, "multinomial weights")?;
            let dist = WeightedIndex::new(&w).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for i in 0..n {
                let c = dist.sample(rng);
                if c < k {
                    x[(i, c)] = 1.0;
                }
            }
        }
        LatentDist::DirichletFirstK { alpha } => {
            let a = broadcast(alpha, k, "dirichlet alpha")?;
            let gammas = a
                .iter()
                .map(|&ak| Gamma::new(ak, 1.0).map_err(|e| Error::InvalidParameter(format!("alpha {ak}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let mut draw = vec![0.0; k + 1];
            for i in 0..n {
                loop {
                    for (slot, g) in draw.iter_mut().zip(&gammas) {
                        *slot = g.sample(rng);
                    }
                    let total: f64 = draw.iter().sum();
                    if total > 0.0 && total.is_finite() {
                        for j in 0..k {
                            x[(i, j)] = draw[j] / total;
                        }
                        break;
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Symmetric `k x k` matrix whose upper triangle (diagonal included) is
/// i.i.d. `Uniform(c, d)`, drawn row by row.
pub fn sample_loading(k: usize, c: f64, d: f64, rng: &mut impl Rng) -> Result<Matrix> {
    if !(c <= d) {
        return Err(Error::InvalidParameter(format!("loading range needs c <= d, got ({c}, {d})")));
    }
    let uniform = if c < d {
        Some(Uniform::new(c, d).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let mut b = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = match &uniform {
                Some(u) => u.sample(rng),
                None => c,
            };
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// A generated model instance.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Probabilities with zero diagonals.
    pub p: ProbabilityTensor,
    pub labels: LayerLabels,
    /// One `n x K_m` latent matrix per group.
    pub latent: Vec<Matrix>,
    /// One symmetric `K_{s(l)} x K_{s(l)}` loading matrix per layer.
    pub loadings: Vec<Matrix>,
}

impl GroundTruth {
    /// Assembles an instance from its parts, validating `|P| <= 1` off the
    /// diagonal.
    pub fn from_parts(labels: LayerLabels, latent: Vec<Matrix>, loadings: Vec<Matrix>) -> Result<Self> {
        if latent.len() != labels.num_groups() {
            return Err(Error::Dimension(format!(
                "{} latent matrices for {} groups",
                latent.len(),
                labels.num_groups()
            )));
        }
        if loadings.len() != labels.len() {
            return Err(Error::Dimension(format!("{} loadings for {} layers", loadings.len(), labels.len())));
        }
        let n = latent[0].nrows();
        for (m, x) in latent.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::Dimension(format!("latent matrix {m} has {} rows, expected {n}", x.nrows())));
            }
        }
        for (l, b) in loadings.iter().enumerate() {
            let k = latent[labels.group(l)].ncols();
            if b.shape() != (k, k) {
                return Err(Error::Dimension(format!("loading {l} is {:?}, group needs {k}x{k}", b.shape())));
            }
        }
        let layers = labels.len();
        let mut data = vec![0.0; n * n * layers];
        data.par_chunks_mut(n * n).enumerate().for_each(|(l, chunk)| {
            let x = &latent[labels.group(l)];
            let mut dst = DMatrixViewMut::from_slice(chunk, n, n);
            let s = x * &loadings[l] * x.transpose();
            // exact symmetry; the triple product differs from its transpose by rounding
            dst.copy_from(&((&s + s.transpose()) * 0.5));
            dst.fill_diagonal(0.0);
        });
        let p = ProbabilityTensor::new(Tensor3::from_vec([n, n, layers], data)?)?;
        Ok(Self { p, labels, latent, loadings })
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn layers(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> Vec<usize> {
        self.latent.iter().map(|x| x.ncols()).collect()
    }

    /// `X_{s(l)} B_l X_{s(l)}^T`, diagonal kept.
    pub fn low_rank_slice(&self, l: usize) -> Matrix {
        let x = &self.latent[self.labels.group(l)];
        x * &self.loadings[l] * x.transpose()
    }

    /// The centered low-rank tensor with slices `P X_m B_l X_m^T P`,
    /// `P = I - 11^T / n`, diagonal included. This is the exact Tucker-form
    /// signal the estimators target.
    pub fn centered_signal(&self) -> Tensor3 {
        let n = self.n();
        let slices: Vec<Matrix> = (0..self.layers()).map(|l| self.low_rank_slice(l)).collect();
        let raw = Tensor3::from_slices(&slices).unwrap_or_else(|_| Tensor3::zeros(n, n, 0));
        crate::tensor::center(&raw).expect("square slices")
    }
}

/// Draws labels, latent matrices and loadings from independent streams keyed
/// by `config.seed`, then forms `P`.
pub fn build_ground_truth(config: &ModelConfig) -> Result<GroundTruth> {
    config.validate()?;
    let pi = config.group_probabilities();
    let labels = sample_labels(&pi, config.layers, &mut rng::stream(config.seed, &[tag::LABELS]))?;
    let latent = config
        .k
        .iter()
        .enumerate()
        .map(|(m, &k)| sample_latent(&config.latent, config.n, k, &mut rng::stream(config.seed, &[tag::LATENT, m as u64])))
        .collect::<Result<Vec<_>>>()?;
    let (c, d) = config.b_range;
    let loadings = (0..config.layers)
        .map(|l| {
            let k = config.k[labels.group(l)];
            sample_loading(k, c, d, &mut rng::stream(config.seed, &[tag::LOADING, l as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::from_parts(labels, latent, loadings)
}

/// Samples every upper-triangular pair of every layer independently; layer
/// `l` uses the stream `(seed, EDGES, l)`.
pub fn sample_adjacency(p: &ProbabilityTensor, seed: u64) -> SignedAdjacencyTensor {
    let [n, _, layers] = p.tensor().dims();
    let mut data = vec![0.0; n * n * layers];
    if n > 0 {
        data.par_chunks_mut(n * n).enumerate().for_each(|(l, chunk)| {
            let mut rng = rng::stream(seed, &[tag::EDGES, l as u64]);
            let src = p.tensor().slice(l);
            for j in 1..n {
                for i in 0..j {
                    let prob = src[(i, j)];
                    let u: f64 = rng.random();
                    if u < prob.abs() {
                        let v = prob.signum();
                        chunk[i + n * j] = v;
                        chunk[j + n * i] = v;
                    }
                }
            }
        });
    }
    let t = Tensor3::from_vec([n, n, layers], data).expect("dims match");
    SignedAdjacencyTensor::from_raw(t)
}

/// Mean absolute edge density `sum |A| / (n (n - 1) L)`, used as a proxy for
/// the sparsity factor.
pub fn estimate_sparsity(a: &SignedAdjacencyTensor) -> f64 {
    let [n, _, layers] = a.tensor().dims();
    if n < 2 || layers == 0 {
        return 0.0;
    }
    let total: f64 = a.tensor().as_slice().iter().map(|v| v.abs()).sum();
    total / (n * (n - 1) * layers) as f64
}
