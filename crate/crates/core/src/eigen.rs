//! Sorted spectra of small dense symmetric matrices.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Eigenpairs sorted by ascending eigenvalue; column `k` of `vectors`
/// belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 10_000;

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.norm();
    let asym = (m - m.transpose()).norm();
    if asym > 1e-8 * scale.max(1.0) {
        return Err(Error::Internal(format!("matrix is not symmetric (‖M - Mᵀ‖ = {asym:.3e})")));
    }
    if m.nrows() == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym
        .clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NoConvergence(MAX_SWEEPS))?;

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);

    for (k, &lambda) in values.iter().enumerate() {
        let v = vectors.column(k);
        let res = (&sym * v - v * lambda).norm();
        if res > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Internal(format!(
                "eigenpair {k} has residual {res:.3e} for ‖M‖ = {scale:.3e}"
            )));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(symmetric_eigen(m)?.values)
}
