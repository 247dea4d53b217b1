//! Covariance, correlation and precision estimates.
//!
//! Two shrinkage flavors live here. [`shrunk_precision`] adds `λI` before
//! inverting. [`ledoit_wolf`] returns the convex combination
//! `(1 - ρ) Σ̂ + ρ μ I` with the closed-form intensity ρ; this is the estimator
//! the decomposable fit applies to every clique and separator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::TimeSeriesDataset;
use crate::linalg;
use crate::{Error, Result};

/// Symmetry tolerance on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Covariance,
    Correlation,
    Precision,
}

/// A real symmetric `p × p` matrix tagged with the role it plays.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    values: DMatrix<f64>,
    kind: MatrixKind,
    spd: bool,
}

impl SymmetricMatrix {
    /// Validates symmetry (and a unit diagonal for correlations) and records
    /// whether a Cholesky factorization succeeds.
    pub fn new(values: DMatrix<f64>, kind: MatrixKind) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::invalid(format!(
                "matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let asym = linalg::asymmetry(&values);
        if asym >= SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "matrix is not symmetric (max deviation {asym:e})"
            )));
        }
        if kind == MatrixKind::Correlation
            && values.diagonal().iter().any(|d| (d - 1.0).abs() >= SYMMETRY_TOL)
        {
            return Err(Error::invalid("correlation matrix needs a unit diagonal"));
        }
        let spd = linalg::is_spd(&values);
        Ok(Self { values, kind, spd })
    }

    /// Like [`SymmetricMatrix::new`] but averages `A` and `Aᵀ` first, for
    /// results of floating-point products and inversions.
    pub fn symmetrized(values: DMatrix<f64>, kind: MatrixKind) -> Result<Self> {
        Self::new(linalg::symmetrize(values), kind)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn is_spd(&self) -> bool {
        self.spd
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Principal submatrix on `idx`, same kind.
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        Self::new(linalg::principal(&self.values, idx), self.kind)
    }

    /// Inverse of an SPD matrix. Covariances and correlations invert to a
    /// precision; precisions invert to a covariance.
    pub fn inverse(&self) -> Result<Self> {
        let inv = linalg::spd_inverse(&self.values, "cannot invert")?;
        let kind = match self.kind {
            MatrixKind::Precision => MatrixKind::Covariance,
            _ => MatrixKind::Precision,
        };
        Self::new(inv, kind)
    }

    pub fn log_det(&self) -> Result<f64> {
        linalg::log_det_spd(&self.values)
            .ok_or_else(|| Error::NotPositiveDefinite("log det undefined".into()))
    }
}

/// `(1/n) XᵀX` on column-centered data.
pub fn empirical_covariance(data: &TimeSeriesDataset) -> SymmetricMatrix {
    covariance_of(data.samples())
}

pub(crate) fn covariance_of(samples: &DMatrix<f64>) -> SymmetricMatrix {
    let centered = linalg::center_columns(samples);
    let cov = centered.transpose() * &centered / samples.nrows() as f64;
    SymmetricMatrix::symmetrized(cov, MatrixKind::Covariance).expect("XᵀX is symmetric and finite")
}

/// `R_ij = Σ_ij / sqrt(Σ_ii Σ_jj)` with an exact unit diagonal.
pub fn to_correlation(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if m.kind() != MatrixKind::Covariance {
        return Err(Error::invalid(format!(
            "expected a covariance, got {:?}",
            m.kind()
        )));
    }
    let v = m.values();
    let p = m.dim();
    if let Some(i) = (0..p).find(|&i| v[(i, i)] <= 0.0) {
        return Err(Error::invalid(format!(
            "non-positive variance {} at index {i}",
            v[(i, i)]
        )));
    }
    let sd: Vec<f64> = (0..p).map(|i| v[(i, i)].sqrt()).collect();
    let r = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            v[(i, j)] / (sd[i] * sd[j])
        }
    });
    SymmetricMatrix::symmetrized(r, MatrixKind::Correlation)
}

/// `(cov + λI)⁻¹`.
pub fn shrunk_precision(cov: &SymmetricMatrix, lambda: f64) -> Result<SymmetricMatrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = cov.dim();
    let shifted = cov.values() + DMatrix::identity(p, p) * lambda;
    let inv = linalg::spd_inverse(&shifted, "").map_err(|_| {
        if lambda == 0.0 {
            Error::Singular("covariance is singular; shrinkage required".into())
        } else {
            Error::NotPositiveDefinite("cov + lambda I".into())
        }
    })?;
    SymmetricMatrix::new(inv, MatrixKind::Precision)
}

/// Output of [`ledoit_wolf`].
#[derive(Debug, Clone)]
pub struct LedoitWolf {
    /// `(1 - ρ) Σ̂ + ρ μ I`.
    pub covariance: SymmetricMatrix,
    /// Shrinkage intensity ρ in `[0, 1]`.
    pub shrinkage: f64,
    /// Target scale `μ = tr(Σ̂) / p`.
    pub mu: f64,
    /// `ρ μ`: the identity shift in the convex combination, i.e.
    /// `covariance = (1 - ρ) Σ̂ + lambda I`.
    pub lambda: f64,
}

/// Ledoit-Wolf shrinkage toward a scaled identity.
pub fn ledoit_wolf(data: &TimeSeriesDataset) -> LedoitWolf {
    ledoit_wolf_centered(&linalg::center_columns(data.samples()))
}

/// Ledoit-Wolf on already column-centered samples (`n × p`).
pub(crate) fn ledoit_wolf_centered(x: &DMatrix<f64>) -> LedoitWolf {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let s = linalg::symmetrize(x.transpose() * x / n);
    let mu = s.trace() / p as f64;

    let mut dispersion = s.norm_squared() - p as f64 * mu * mu; // ‖S - μI‖²
    dispersion = dispersion.max(0.0);
    // Σ_k ‖x_k x_kᵀ - S‖² = Σ_k ‖x_k‖⁴ - n ‖S‖²
    let fourth: f64 = x.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let variance = ((fourth - n * s.norm_squared()) / (n * n)).max(0.0);

    let shrinkage = if dispersion <= 0.0 {
        1.0
    } else {
        (variance.min(dispersion) / dispersion).clamp(0.0, 1.0)
    };
    let mut cov = s * (1.0 - shrinkage);
    for i in 0..p {
        cov[(i, i)] += shrinkage * mu;
    }
    LedoitWolf {
        covariance: SymmetricMatrix::symmetrized(cov, MatrixKind::Covariance)
            .expect("convex combination of symmetric matrices"),
        shrinkage,
        mu,
        lambda: shrinkage * mu,
    }
}
