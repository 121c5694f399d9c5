use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index ({0}, {1}, {2}) out of bounds for dims {3:?}")]
    Index(usize, usize, usize, [usize; 3]),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A truncated SVD was asked for more directions than the input carries.
    #[error("rank deficient: requested rank {requested}, numerical rank {found}")]
    RankDeficient { requested: usize, found: usize },

    #[error("SVD did not converge")]
    SvdFailure,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("|P| = {value} exceeds 1 at ({i}, {j}, {l})")]
    ProbabilityOverflow { i: usize, j: usize, l: usize, value: f64 },

    #[error("singular sample covariance in group {group}; reduce its ambient dimension")]
    SingularCovariance { group: usize },

    #[error("threshold is indeterminate: {0}")]
    IndeterminateThreshold(String),

    #[error("not orthonormal: ||Q^T Q - I||_F = {0:e}")]
    NotOrthonormal(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
