//! Small dense helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() == 0 {
        return None;
    }
    Cholesky::new(m.clone())
}

pub(crate) fn is_spd(m: &DMatrix<f64>) -> bool {
    m.nrows() > 0 && cholesky(m).is_some()
}

/// Inverse of an SPD matrix, symmetrized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = cholesky(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(symmetrize(chol.inverse()))
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = cholesky(m)?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// `target[idx, idx] += sign * block`.
pub(crate) fn add_padded(target: &mut DMatrix<f64>, idx: &[usize], block: &DMatrix<f64>, sign: f64) {
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            target[(i, j)] += sign * block[(r, c)];
        }
    }
}

pub(crate) fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

pub(crate) fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}
