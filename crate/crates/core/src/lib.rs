//! Learning sparse and decomposable Gaussian graphical models from
//! multivariate time series.
//!
//! The crate covers the whole pipeline: loading and preprocessing datasets
//! ([`dataio`]), covariance and shrinkage estimation ([`covariance`]), graph
//! machinery for chordal models ([`graph`]), the decomposable estimator
//! ([`fastdecomp`]) alongside ℓ1-penalized ([`sparse`]) and PC-based
//! ([`pcdag`]) baselines, cross-validated likelihood scoring ([`eval`]) and
//! synthetic ground truth ([`synth`]).
//!
//! Datasets store time points as rows and variables as columns, so a dataset
//! with `n` samples of `p` variables is an `n × p` matrix.

pub mod covariance;
pub mod dataio;
mod error;
pub mod eval;
pub mod fastdecomp;
pub mod graph;
pub mod io;
pub(crate) mod linalg;
pub mod pcdag;
pub mod sparse;
pub mod synth;

pub use covariance::{MatrixKind, SymmetricMatrix};
pub use dataio::TimeSeriesDataset;
pub use error::{Error, Result};
pub use graph::{CliqueDecomposition, GraphMetrics, UndirectedGraph};
