//! k-means with k-means++ seeding and restarts.
//!
//! Each restart alternates Lloyd iterations with single-point transfer
//! passes (Hartigan's rule), which escape many Lloyd fixed points that are
//! not local optima under moving one point.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// Cluster of each row, `0..k`.
    pub labels: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
}

/// Clusters the rows of `points` into `k` groups. Restart `r` draws from
/// stream `(seed, [KMEANS, r])`; the lowest objective wins, earlier restarts
/// win ties.
pub fn kmeans(points: &Matrix, k: usize, cfg: &KmeansConfig, seed: u64) -> Result<KmeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..={n}")));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter("at least one k-means restart is required".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    let rows = row_vectors(points);
    let runs: Vec<KmeansResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tag::KMEANS, r as u64]);
            let centers = plus_plus(&rows, k, &mut rng);
            let (labels, objective, _) = lloyd(&rows, centers, cfg.max_iters);
            KmeansResult { labels, objective }
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("restarts > 0");
    Ok(best)
}

fn row_vectors(points: &Matrix) -> Vec<Vec<f64>> {
    points.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(dist2(r, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(rows: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|r| {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(r, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

fn centroids(rows: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = rows[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &c) in rows.iter().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &cnt) in sums.iter_mut().zip(&counts) {
        if cnt > 0 {
            s.iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    (sums, counts)
}

fn objective(rows: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    rows.iter().zip(labels).map(|(r, &c)| dist2(r, &centers[c])).sum()
}

/// Moves, for each empty cluster, the point farthest from its centroid among
/// clusters with at least two members.
fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let (centers, counts) = centroids(rows, labels, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let far = (0..rows.len())
            .filter(|&i| counts[labels[i]] >= 2)
            .map(|i| (i, dist2(&rows[i], &centers[labels[i]])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match far {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

/// One sweep of single-point transfers. Moving `x` from `a` to `b` changes
/// the objective by `n_b/(n_b+1) |x-c_b|^2 - n_a/(n_a-1) |x-c_a|^2`; the best
/// strictly improving move is applied per point. Returns whether any point
/// moved.
fn transfer_pass(rows: &[Vec<f64>], labels: &mut [usize], k: usize) -> bool {
    let (mut centers, mut counts) = centroids(rows, labels, k);
    let mut moved = false;
    for (i, x) in rows.iter().enumerate() {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let na = counts[a] as f64;
        let removal = na / (na - 1.0) * dist2(x, &centers[a]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let delta = nb / (nb + 1.0) * dist2(x, &centers[b]) - removal;
            if delta < -1e-12 * removal.max(f64::MIN_POSITIVE) && best.is_none_or(|(_, d)| delta < d) {
                best = Some((b, delta));
            }
        }
        if let Some((b, _)) = best {
            let (na, nb) = (counts[a] as f64, counts[b] as f64);
            for (j, v) in x.iter().enumerate() {
                centers[a][j] = (centers[a][j] * na - v) / (na - 1.0);
                centers[b][j] = (centers[b][j] * nb + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    moved
}

/// Lloyd iterations from `centers`, alternated with transfer passes until
/// neither changes the partition. Returns labels, final objective and the
/// objective after every step.
pub(crate) fn lloyd(rows: &[Vec<f64>], centers: Vec<Vec<f64>>, max_iters: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let k = centers.len();
    let mut labels = assign(rows, &centers);
    repair_empty(rows, &mut labels, k);
    let (mut centers, _) = centroids(rows, &labels, k);
    let mut history = vec![objective(rows, &labels, &centers)];
    for _ in 0..max_iters {
        let mut next = assign(rows, &centers);
        repair_empty(rows, &mut next, k);
        if next == labels && !transfer_pass(rows, &mut next, k) {
            break;
        }
        labels = next;
        centers = centroids(rows, &labels, k).0;
        history.push(objective(rows, &labels, &centers));
    }
    let obj = *history.last().expect("nonempty");
    (labels, obj, history)
}
