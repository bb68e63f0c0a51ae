//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `m + coef * (trace(m) / n) * I`, floored so an all-zero matrix still
/// becomes positive definite.
pub fn shrink(m: &DMatrix<f64>, coef: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let ridge = (coef * m.trace() / n as f64).max(SHRINK_FLOOR);
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] += ridge;
    }
    out
}

pub const SHRINK_FLOOR: f64 = 1e-9;

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix is not positive definite", m.nrows(), m.ncols())))?;
    let inv = chol.inverse();
    // symmetrize away round-off
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Solves `a w = lambda b w` for symmetric `a` and SPD `b`.
///
/// Eigenvalues come back in descending order; eigenvectors are the columns
/// of the returned matrix, scaled so that `w' b w = 1`.
pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("composite covariance is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("composite covariance factor is singular".into()))?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let back = l_inv.transpose();
    let n = a.nrows();
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        values.push(eig.eigenvalues[i]);
        let w = &back * eig.eigenvectors.column(i);
        vectors.set_column(col, &w);
    }
    Ok((values, vectors))
}
