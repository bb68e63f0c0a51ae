//! Common spatial patterns.
//!
//! Filters solve `C_a w = lambda (C_a + C_b) w` on trace-normalized,
//! shrinkage-regularized class covariances. Eigenvalues lie in `[0, 1]`;
//! values far from 0.5 mark filters whose output variance differs most
//! between the two classes.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigen, shrink};

pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CspFilters {
    /// `d x C`, one filter per row.
    pub filters: Array2<f64>,
    /// Generalized eigenvalue of each row.
    pub eigenvalues: Vec<f64>,
}

/// `X X' / trace(X X')` for one `C x T` window.
pub fn normalized_covariance(window: &Array2<f64>) -> Result<DMatrix<f64>> {
    let c = window.nrows();
    let xxt = window.dot(&window.t());
    let trace: f64 = (0..c).map(|i| xxt[[i, i]]).sum();
    if !(trace.is_finite() && trace > 0.0) {
        return Err(Error::InsufficientData("window with zero power".into()));
    }
    Ok(DMatrix::from_fn(c, c, |i, j| xxt[[i, j]] / trace))
}

/// Average normalized covariance of a set of windows.
pub fn mean_covariance(windows: &[&Array2<f64>]) -> Result<DMatrix<f64>> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InsufficientData("no windows".into()))?;
    let c = first.nrows();
    let mut acc = DMatrix::zeros(c, c);
    for w in windows {
        if w.nrows() != c {
            return Err(Error::Dimension(format!(
                "window has {} channels, expected {c}",
                w.nrows()
            )));
        }
        acc += normalized_covariance(w)?;
    }
    Ok(acc / windows.len() as f64)
}

/// Solves the two-class problem directly on covariance matrices.
///
/// Rows are interleaved by discriminability: largest eigenvalue, smallest,
/// second largest, second smallest, and so on.
pub fn csp_from_covariances(cov_a: &DMatrix<f64>, cov_b: &DMatrix<f64>, n_pairs: usize) -> Result<CspFilters> {
    let c = cov_a.nrows();
    if cov_b.nrows() != c {
        return Err(Error::Dimension("class covariances differ in size".into()));
    }
    if n_pairs == 0 || 2 * n_pairs > c {
        return Err(Error::InvalidParameter(format!(
            "n_pairs = {n_pairs} needs 1 <= 2*n_pairs <= {c} channels"
        )));
    }
    let composite = cov_a + cov_b;
    let (values, vectors) = generalized_symmetric_eigen(cov_a, &composite)?;
    let mut order = Vec::with_capacity(2 * n_pairs);
    for i in 0..n_pairs {
        order.push(i);
        order.push(c - 1 - i);
    }
    let filters = Array2::from_shape_fn((order.len(), c), |(r, ch)| vectors[(ch, order[r])]);
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    Ok(CspFilters { filters, eigenvalues })
}

pub fn fit_csp(
    class_a: &[&Array2<f64>],
    class_b: &[&Array2<f64>],
    n_pairs: usize,
    shrinkage: f64,
) -> Result<CspFilters> {
    if class_a.len() < 2 || class_b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "CSP needs at least 2 windows per class, got {} and {}",
            class_a.len(),
            class_b.len()
        )));
    }
    let ca = shrink(&mean_covariance(class_a)?, shrinkage);
    let cb = shrink(&mean_covariance(class_b)?, shrinkage);
    csp_from_covariances(&ca, &cb, n_pairs)
}

/// One-vs-rest filter banks, concatenated in class order.
pub fn fit_csp_multiclass(classes: &[Vec<&Array2<f64>>], n_pairs: usize, shrinkage: f64) -> Result<CspFilters> {
    match classes.len() {
        0 | 1 => Err(Error::InsufficientData("CSP needs at least two classes".into())),
        2 => fit_csp(&classes[0], &classes[1], n_pairs, shrinkage),
        _ => {
            let mut rows = Vec::new();
            let mut eigenvalues = Vec::new();
            for (k, own) in classes.iter().enumerate() {
                let rest: Vec<&Array2<f64>> = classes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, w)| w.iter().copied())
                    .collect();
                let bank = fit_csp(own, &rest, n_pairs, shrinkage)?;
                rows.extend(bank.filters.rows().into_iter().map(|r| r.to_vec()));
                eigenvalues.extend(bank.eigenvalues);
            }
            let c = rows[0].len();
            let flat: Vec<f64> = rows.concat();
            let filters =
                Array2::from_shape_vec((flat.len() / c, c), flat).map_err(|e| Error::Dimension(e.to_string()))?;
            Ok(CspFilters { filters, eigenvalues })
        }
    }
}

/// Log-variance of each spatially filtered channel.
pub fn extract_features(window: &Array2<f64>, filters: &Array2<f64>) -> Result<Vec<f64>> {
    if window.nrows() != filters.ncols() {
        return Err(Error::Dimension(format!(
            "window has {} channels, filters expect {}",
            window.nrows(),
            filters.ncols()
        )));
    }
    let projected = filters.dot(window);
    let t = projected.ncols() as f64;
    projected
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mean = row.sum() / t;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
            if var > 0.0 && var.is_finite() {
                Ok(var.ln())
            } else {
                Err(Error::ZeroVariance { filter: i })
            }
        })
        .collect()
}
