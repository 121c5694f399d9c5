//! Dense 3-way tensors.
//!
//! Values are stored with the first index varying fastest:
//! `(i1, i2, i3)` lives at `i1 + n1 * (i2 + n2 * i3)`. Each frontal slice
//! `X(:, :, l)` is therefore a contiguous column-major `n1 x n2` block and maps
//! onto a [`nalgebra`] view without copying.
//!
//! Unfoldings follow the Kolda-Bader convention:
//!
//! | mode | rows | column of `(i1, i2, i3)` |
//! |------|------|--------------------------|
//! | 1    | `n1` | `i2 + n2 * i3`           |
//! | 2    | `n2` | `i1 + n1 * i3`           |
//! | 3    | `n3` | `i1 + n1 * i2`           |
//!
//! With this ordering `unfold(X x_k A, k) == A * unfold(X, k)` holds exactly.

use nalgebra::{DMatrixView, DMatrixViewMut};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Matrix;

/// Tensor mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::InvalidParameter(format!("mode must be 1, 2 or 3, got {k}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self { dims: [n1, n2, n3], data: vec![0.0; n1 * n2 * n3] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{} values supplied for dims {dims:?} ({expected} expected)",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [n1, n2, n3] = dims;
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    data.push(f(i1, i2, i3));
                }
            }
        }
        Self { dims, data }
    }

    /// Stacks equally sized matrices as frontal slices.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Dimension("at least one slice required".into()))?;
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.shape() != (n1, n2) {
                return Err(Error::Dimension(format!(
                    "slice shape {:?} differs from {:?}",
                    s.shape(),
                    (n1, n2)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { dims: [n1, n2, slices.len()], data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        i1 + self.dims[0] * (i2 + self.dims[1] * i3)
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> Result<f64> {
        self.check_index(i1, i2, i3)?;
        Ok(self.data[self.offset(i1, i2, i3)])
    }

    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, value: f64) -> Result<()> {
        self.check_index(i1, i2, i3)?;
        let k = self.offset(i1, i2, i3);
        self.data[k] = value;
        Ok(())
    }

    fn check_index(&self, i1: usize, i2: usize, i3: usize) -> Result<()> {
        let [n1, n2, n3] = self.dims;
        if i1 >= n1 || i2 >= n2 || i3 >= n3 {
            return Err(Error::Index(i1, i2, i3, self.dims));
        }
        Ok(())
    }

    /// Unchecked accessor for hot loops inside the crate.
    #[inline]
    pub(crate) fn at(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[self.offset(i1, i2, i3)]
    }

    pub fn slice(&self, l: usize) -> DMatrixView<'_, f64> {
        let [n1, n2, _] = self.dims;
        let block = n1 * n2;
        DMatrixView::from_slice(&self.data[l * block..(l + 1) * block], n1, n2)
    }

    pub fn slice_mut(&mut self, l: usize) -> DMatrixViewMut<'_, f64> {
        let [n1, n2, _] = self.dims;
        let block = n1 * n2;
        DMatrixViewMut::from_slice(&mut self.data[l * block..(l + 1) * block], n1, n2)
    }

    pub fn slices(&self) -> impl Iterator<Item = DMatrixView<'_, f64>> + '_ {
        (0..self.dims[2]).map(move |l| self.slice(l))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { dims: self.dims, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn has_square_slices(&self) -> bool {
        self.dims[0] == self.dims[1]
    }
}

/// Mode-`k` unfolding.
pub fn matricize(x: &Tensor3, mode: Mode) -> Matrix {
    let [n1, n2, n3] = x.dims;
    match mode {
        Mode::One => Matrix::from_column_slice(n1, n2 * n3, &x.data),
        Mode::Two => {
            let mut out = Matrix::zeros(n2, n1 * n3);
            for i3 in 0..n3 {
                for i1 in 0..n1 {
                    let col = i1 + n1 * i3;
                    for i2 in 0..n2 {
                        out[(i2, col)] = x.at(i1, i2, i3);
                    }
                }
            }
            out
        }
        Mode::Three => DMatrixView::from_slice(&x.data, n1 * n2, n3).transpose(),
    }
}

/// `X x_k A`: replaces dimension `n_k` by the row count of `a`.
pub fn mode_product(x: &Tensor3, a: &Matrix, mode: Mode) -> Result<Tensor3> {
    let [n1, n2, n3] = x.dims;
    let nk = x.dims[mode.axis()];
    if a.ncols() != nk {
        return Err(Error::Dimension(format!(
            "mode-{} product needs {} columns, matrix has {}",
            mode.axis() + 1,
            nk,
            a.ncols()
        )));
    }
    let j = a.nrows();
    match mode {
        Mode::One => {
            let unfolded = DMatrixView::from_slice(&x.data, n1, n2 * n3);
            let out = a * unfolded;
            Ok(Tensor3 { dims: [j, n2, n3], data: out.data.into() })
        }
        Mode::Two => {
            let at = a.transpose();
            let mut data = vec![0.0; n1 * j * n3];
            if n1 * j > 0 {
                data.par_chunks_mut(n1 * j).enumerate().for_each(|(l, chunk)| {
                    let mut dst = DMatrixViewMut::from_slice(chunk, n1, j);
                    dst.gemm(1.0, &x.slice(l), &at, 0.0);
                });
            }
            Ok(Tensor3 { dims: [n1, j, n3], data })
        }
        Mode::Three => {
            let unfolded = DMatrixView::from_slice(&x.data, n1 * n2, n3);
            let out = unfolded * a.transpose();
            Ok(Tensor3 { dims: [n1, n2, j], data: out.data.into() })
        }
    }
}

/// `X x_1 P x_2 P` with `P = I - 11^T / n`, applied as row and column mean
/// removal on every slice.
pub fn center(x: &Tensor3) -> Result<Tensor3> {
    if !x.has_square_slices() {
        return Err(Error::Dimension(format!("centering needs square slices, got {:?}", x.dims)));
    }
    let n = x.dims[0];
    let mut out = x.clone();
    if n == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(n * n).for_each(|chunk| center_slice(chunk, n));
    Ok(out)
}

fn center_slice(s: &mut [f64], n: usize) {
    let inv = 1.0 / n as f64;
    let mut row_mean = vec![0.0; n];
    let mut col_mean = vec![0.0; n];
    for j in 0..n {
        let col = &s[j * n..(j + 1) * n];
        let mut acc = 0.0;
        for (i, &v) in col.iter().enumerate() {
            row_mean[i] += v;
            acc += v;
        }
        col_mean[j] = acc * inv;
    }
    let mut grand = 0.0;
    for r in row_mean.iter_mut() {
        grand += *r;
        *r *= inv;
    }
    grand *= inv * inv;
    for j in 0..n {
        let col = &mut s[j * n..(j + 1) * n];
        for (i, v) in col.iter_mut().enumerate() {
            *v += grand - row_mean[i] - col_mean[j];
        }
    }
}

pub fn frobenius_norm(x: &Tensor3) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_square(t: &Tensor3, what: &str) -> Result<()> {
    if !t.has_square_slices() {
        return Err(Error::Dimension(format!("{what} needs n x n x L dims, got {:?}", t.dims)));
    }
    Ok(())
}

fn check_symmetric(t: &Tensor3, what: &str) -> Result<()> {
    let [n, _, l] = t.dims;
    for k in 0..l {
        for j in 0..n {
            for i in 0..j {
                if t.at(i, j, k) != t.at(j, i, k) {
                    return Err(Error::InvalidParameter(format!(
                        "{what}: slice {k} is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Observed signed multiplex adjacency: entries in {-1, 0, 1}, symmetric
/// slices, zero diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAdjacencyTensor(Tensor3);

impl SignedAdjacencyTensor {
    pub fn new(t: Tensor3) -> Result<Self> {
        check_square(&t, "adjacency")?;
        if let Some(v) = t.data.iter().find(|v| !matches!(**v, -1.0 | 0.0 | 1.0)) {
            return Err(Error::InvalidParameter(format!("adjacency value {v} not in {{-1, 0, 1}}")));
        }
        check_symmetric(&t, "adjacency")?;
        let [n, _, l] = t.dims;
        for k in 0..l {
            for i in 0..n {
                if t.at(i, i, k) != 0.0 {
                    return Err(Error::InvalidParameter(format!("adjacency diagonal ({i}, {i}, {k}) is nonzero")));
                }
            }
        }
        Ok(Self(t))
    }

    /// Builds from upper-triangular triplets `(l, i, j, v)` with `i < j`,
    /// zero-based.
    pub fn from_triplets(n: usize, layers: usize, triplets: &[(usize, usize, usize, i8)]) -> Result<Self> {
        let mut t = Tensor3::zeros(n, n, layers);
        for &(l, i, j, v) in triplets {
            if i == j {
                return Err(Error::InvalidParameter(format!("diagonal entry ({i}, {i}) in layer {l}")));
            }
            if v != 1 && v != -1 {
                return Err(Error::InvalidParameter(format!("edge value {v} not in {{-1, 1}}")));
            }
            t.set(i, j, l, f64::from(v))?;
            t.set(j, i, l, f64::from(v))?;
        }
        Ok(Self(t))
    }

    pub(crate) fn from_raw(t: Tensor3) -> Self {
        Self(t)
    }

    pub fn n(&self) -> usize {
        self.0.dims[0]
    }

    pub fn layers(&self) -> usize {
        self.0.dims[2]
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.0
    }

    /// Upper-triangular nonzeros as zero-based `(l, i, j, v)`, ordered by layer,
    /// then row, then column.
    pub fn triplets(&self) -> Vec<(usize, usize, usize, i8)> {
        let [n, _, layers] = self.0.dims;
        let mut out = Vec::new();
        for l in 0..layers {
            for i in 0..n {
                for j in i + 1..n {
                    let v = self.0.at(i, j, l);
                    if v != 0.0 {
                        out.push((l, i, j, v as i8));
                    }
                }
            }
        }
        out
    }
}

impl AsRef<Tensor3> for SignedAdjacencyTensor {
    fn as_ref(&self) -> &Tensor3 {
        &self.0
    }
}

/// Ground-truth signed connection probabilities: symmetric slices with
/// entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTensor(Tensor3);

impl ProbabilityTensor {
    pub fn new(t: Tensor3) -> Result<Self> {
        check_square(&t, "probability tensor")?;
        let [n, _, layers] = t.dims;
        for l in 0..layers {
            for j in 0..n {
                for i in 0..n {
                    let v = t.at(i, j, l);
                    if !v.is_finite() {
                        return Err(Error::NonFinite("probability tensor"));
                    }
                    if v.abs() > 1.0 {
                        return Err(Error::ProbabilityOverflow { i, j, l, value: v });
                    }
                }
            }
        }
        check_symmetric(&t, "probability tensor")?;
        Ok(Self(t))
    }

    pub fn n(&self) -> usize {
        self.0.dims[0]
    }

    pub fn layers(&self) -> usize {
        self.0.dims[2]
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }
}

impl AsRef<Tensor3> for ProbabilityTensor {
    fn as_ref(&self) -> &Tensor3 {
        &self.0
    }
}
