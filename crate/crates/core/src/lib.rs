//! Generation, estimation and between-layer clustering for multiplex signed
//! generalized random dot product graphs.
//!
//! The pipeline has three stages:
//!
//! 1. [`netgen`] draws a ground-truth model (layer groups, latent positions,
//!    loading matrices) and samples a signed adjacency tensor from it.
//! 2. [`hooi`] estimates the orthonormal Tucker factors `U` (nodes) and `W`
//!    (layers) of the centered adjacency tensor with a spectral start followed
//!    by regularized higher-order orthogonal iterations.
//! 3. [`cluster`] partitions the layers by thresholding the row scalar products
//!    of `W`, and [`metrics`] scores the result.
//!
//! Dense 3-way tensors live in [`tensor`], the matrix primitives in [`linalg`].

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod error;
pub mod hooi;
pub mod io;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod netgen;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

pub use cluster::{ClusterConfig, ClusterContext, ClusteringResult, ThresholdMode};
pub use hooi::{FactorPair, HooiConfig};
pub use linalg::OrthonormalFactor;

pub use metrics::ErrorReport;
pub use netgen::{GroundTruth, LatentDist, LayerLabels, ModelConfig};
pub use tensor::{ProbabilityTensor, SignedAdjacencyTensor, Tensor3};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
