//! Truncated SVD, row regularization, Procrustes alignment and subspace
//! distances.
//!
//! Singular vector signs are never normalized. Anything that compares two
//! factors goes through projectors or principal angles.

use nalgebra::{SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::Matrix;

/// Tolerance for the `Q^T Q = I` check.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Above this smaller-side dimension the truncated SVD goes through the
/// eigendecomposition of the Gram matrix instead of a full SVD.
pub const FULL_SVD_MAX_DIM: usize = 512;

const SVD_MAX_ITER: usize = 10_000;

/// An `m x r` matrix with orthonormal columns, `m >= r`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFactor(Matrix);

impl OrthonormalFactor {
    pub fn new(q: Matrix) -> Result<Self> {
        if q.nrows() < q.ncols() {
            return Err(Error::Dimension(format!(
                "orthonormal factor needs rows >= cols, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let dev = orthonormality_defect(&q);
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self(q))
    }

    /// Wraps a matrix whose columns are orthonormal by construction.
    pub(crate) fn from_trusted(q: Matrix) -> Self {
        debug_assert!(orthonormality_defect(&q) < 1e-8, "defect {}", orthonormality_defect(&q));
        Self(q)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    /// `Q Q^T`.
    pub fn projector(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }

    /// Right-multiplies by an `r x r` orthogonal matrix.
    pub fn rotate(&self, o: &Matrix) -> Result<Self> {
        if o.shape() != (self.rank(), self.rank()) {
            return Err(Error::Dimension(format!("rotation must be {r}x{r}", r = self.rank())));
        }
        Self::new(&self.0 * o)
    }

    /// Applies a row permutation: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self(self.0.select_rows(perm))
    }
}

pub fn orthonormality_defect(q: &Matrix) -> f64 {
    let r = q.ncols();
    (q.transpose() * q - Matrix::identity(r, r)).norm()
}

/// Max Euclidean row norm.
pub fn two_to_inf_norm(u: &Matrix) -> f64 {
    u.row_iter().map(|row| row.norm()).fold(0.0, f64::max)
}

fn numerical_rank(sorted_desc: &[f64], rows: usize, cols: usize) -> usize {
    let top = sorted_desc.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    let tol = top * f64::EPSILON * rows.max(cols) as f64 * 4.0;
    sorted_desc.iter().take_while(|&&s| s > tol).count()
}

fn check_rank_request(m: &Matrix, r: usize) -> Result<()> {
    let lim = m.nrows().min(m.ncols());
    if r == 0 || r > lim {
        return Err(Error::Dimension(format!(
            "rank {r} requested from a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    Ok(())
}

/// Indices of `values` ordered by decreasing `key`, stable on ties.
fn order_desc(values: &[f64], key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| key(values[b]).total_cmp(&key(values[a])));
    idx
}

/// The `r` leading left singular vectors of `m`.
pub fn svd_left(m: &Matrix, r: usize) -> Result<OrthonormalFactor> {
    check_rank_request(m, r)?;
    let (rows, cols) = m.shape();
    if rows.min(cols) <= FULL_SVD_MAX_DIM {
        let svd = SVD::try_new(m.clone(), true, false, f64::EPSILON, SVD_MAX_ITER)
            .ok_or(Error::SvdFailure)?;
        let order = order_desc(svd.singular_values.as_slice(), |s| s);
        let sorted: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let found = numerical_rank(&sorted, rows, cols);
        if found < r {
            return Err(Error::RankDeficient { requested: r, found });
        }
        let u = svd.u.ok_or(Error::SvdFailure)?;
        Ok(OrthonormalFactor::from_trusted(u.select_columns(&order[..r])))
    } else if rows <= cols {
        let gram = m * m.transpose();
        let (vecs, vals) = top_eigenpairs(gram, r, |v| v)?;
        let found = numerical_rank(&vals.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>(), rows, cols);
        if found < r {
            return Err(Error::RankDeficient { requested: r, found });
        }
        Ok(OrthonormalFactor::from_trusted(vecs))
    } else {
        // right singular vectors from the small Gram, then U = M V S^-1
        let gram = m.transpose() * m;
        let (v, vals) = top_eigenpairs(gram, r, |v| v)?;
        let sigma: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        let found = numerical_rank(&sigma, rows, cols);
        if found < r {
            return Err(Error::RankDeficient { requested: r, found });
        }
        let mut u = m * v;
        for (j, s) in sigma.iter().take(r).enumerate() {
            u.column_mut(j).unscale_mut(*s);
        }
        // one Gram-Schmidt pass cleans up rounding from the squared condition number
        let qr = u.qr();
        Ok(OrthonormalFactor::from_trusted(qr.q()))
    }
}

/// Leading `r` left singular vectors of a symmetric matrix, i.e. the
/// eigenvectors with the largest `|lambda|`.
pub fn svd_left_symmetric(m: &Matrix, r: usize) -> Result<OrthonormalFactor> {
    check_rank_request(m, r)?;
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("symmetric SVD needs a square matrix".into()));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, SVD_MAX_ITER).ok_or(Error::SvdFailure)?;
    let order = order_desc(eig.eigenvalues.as_slice(), f64::abs);
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
    let found = numerical_rank(&sorted, n, n);
    if found < r {
        return Err(Error::RankDeficient { requested: r, found });
    }
    Ok(OrthonormalFactor::from_trusted(eig.eigenvectors.select_columns(&order[..r])))
}

fn top_eigenpairs(gram: Matrix, r: usize, key: impl Fn(f64) -> f64) -> Result<(Matrix, Vec<f64>)> {
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, SVD_MAX_ITER).ok_or(Error::SvdFailure)?;
    let order = order_desc(eig.eigenvalues.as_slice(), key);
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((eig.eigenvectors.select_columns(&order[..r]), vals))
}

/// Row clipping: rows with norm above `delta` are rescaled to norm `delta`.
pub fn clip_rows(u: &Matrix, delta: f64) -> Matrix {
    let mut out = u.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > delta {
            row.scale_mut(delta / norm);
        }
    }
    out
}

/// Squared row mass removed by [`clip_rows`]: `sum_i (|u_i|^2 - delta^2)_+`.
///
/// When this is at most 1/2 the clipped matrix keeps `sigma_min^2 >= 1/2`, so
/// [`regularize`] returns a factor with `two_to_inf_norm <= sqrt(2) * delta`.
pub fn clipped_excess(u: &Matrix, delta: f64) -> f64 {
    u.row_iter().map(|row| (row.norm_squared() - delta * delta).max(0.0)).sum()
}

/// Row-norm regularization: clip rows to `delta`, then re-orthonormalize with
/// a rank-`r` SVD.
pub fn regularize(u: &OrthonormalFactor, delta: f64) -> Result<OrthonormalFactor> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if two_to_inf_norm(u.matrix()) <= delta {
        return Ok(u.clone());
    }
    let clipped = clip_rows(u.matrix(), delta);
    svd_left(&clipped, u.rank())
}

fn check_same_shape(u: &OrthonormalFactor, v: &OrthonormalFactor) -> Result<()> {
    if u.matrix().shape() != v.matrix().shape() {
        return Err(Error::Dimension(format!(
            "factor shapes differ: {:?} vs {:?}",
            u.matrix().shape(),
            v.matrix().shape()
        )));
    }
    Ok(())
}

/// Orthogonal `O` minimizing `|| uhat - u O ||_F`.
pub fn align(u: &OrthonormalFactor, uhat: &OrthonormalFactor) -> Result<Matrix> {
    check_same_shape(u, uhat)?;
    let cross = u.matrix().transpose() * uhat.matrix();
    let svd = SVD::try_new(cross, true, true, f64::EPSILON, SVD_MAX_ITER).ok_or(Error::SvdFailure)?;
    let (a, bt) = (svd.u.ok_or(Error::SvdFailure)?, svd.v_t.ok_or(Error::SvdFailure)?);
    Ok(a * bt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinTheta {
    pub spectral: f64,
    pub frobenius: f64,
}

/// Principal-angle distances between the column spaces of `u` and `uhat`.
pub fn sin_theta(u: &OrthonormalFactor, uhat: &OrthonormalFactor) -> Result<SinTheta> {
    check_same_shape(u, uhat)?;
    // (I - UU^T) Uhat has singular values sin(theta_i); forming it directly
    // avoids the cancellation in 1 - cos^2 for nearly equal subspaces.
    let residual = uhat.matrix() - u.matrix() * (u.matrix().transpose() * uhat.matrix());
    let spectral = residual.singular_values().iter().copied().fold(0.0, f64::max);
    Ok(SinTheta { spectral: spectral.min(1.0), frobenius: residual.norm() })
}

/// `|| uhat O - u ||_{2,inf}` with `O` the Procrustes rotation of `uhat` onto `u`.
pub fn two_to_inf_dist(u: &OrthonormalFactor, uhat: &OrthonormalFactor) -> Result<f64> {
    let o = align(uhat, u)?;
    Ok(two_to_inf_norm(&(uhat.matrix() * o - u.matrix())))
}

/// Spectral norm of `PP^T - QQ^T`.
pub fn projector_distance(u: &OrthonormalFactor, v: &OrthonormalFactor) -> Result<f64> {
    check_same_shape(u, v)?;
    let d = u.projector() - v.projector();
    Ok(d.singular_values().iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Haar-ish random orthonormal factor via QR of a Gaussian matrix.
    pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> OrthonormalFactor {
        OrthonormalFactor::new(gaussian(rows, cols, rng).qr().q()).unwrap()
    }

    pub fn random_rotation(r: usize, rng: &mut impl Rng) -> Matrix {
        gaussian(r, r, rng).qr().q()
    }
}
