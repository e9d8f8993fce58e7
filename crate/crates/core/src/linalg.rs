//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Symmetric within `rel_tol` relative to the largest absolute entry.
pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// (min, max) eigenvalue of a symmetric matrix.
pub fn eig_range(m: &Mat) -> (f64, f64) {
    let ev = sym_eigenvalues(m);
    (ev[0], ev[ev.len() - 1])
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &Mat) -> f64 {
    let (lo, hi) = eig_range(m);
    lo.abs().max(hi.abs())
}

/// Operator norm of a general matrix (largest singular value).
pub fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Symmetric PSD check: smallest eigenvalue ≥ −`rel_tol`·max(|largest eigenvalue|).
pub fn is_psd(m: &Mat, rel_tol: f64) -> bool {
    if m.is_empty() {
        return true;
    }
    let (lo, hi) = eig_range(m);
    lo >= -rel_tol * hi.abs().max(lo.abs())
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues at or below `rel_cutoff · λ_max` are treated as zero.
pub fn sym_pinv(m: &Mat, rel_cutoff: f64) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cutoff = rel_cutoff * lmax;
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l > cutoff { 1.0 / l } else { 0.0 };
        scaled.column_mut(j).scale_mut(inv);
    }
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Clip negative eigenvalues of a symmetric matrix to zero.
pub fn project_psd(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l.max(0.0));
    }
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Cholesky factor of a positive definite matrix, with a readable error.
pub fn cholesky(m: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Inverse of a small square matrix, with a readable error.
pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

pub fn trace(m: &Mat) -> f64 {
    m.diagonal().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular_projector() {
        // P = diag(2, 0) in a rotated basis
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let q = Mat::from_row_slice(2, 2, &[c, -c, c, c]);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0]));
        let m = &q * d * q.transpose();
        let p = sym_pinv(&m, 1e-12);
        let expect = &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.0])) * q.transpose();
        assert!((p - expect).abs().max() < 1e-14);
    }

    #[test]
    fn symmetry_check_is_relative() {
        let m = Mat::from_row_slice(2, 2, &[1e6, 1.0, 1.0 + 1e-6, 1.0]);
        assert!(is_symmetric(&m, 1e-10));
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.1, 1.0]);
        assert!(!is_symmetric(&m, 1e-10));
    }

    #[test]
    fn psd_projection_clips() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = project_psd(&m);
        let (lo, _) = eig_range(&p);
        assert!(lo > -1e-12);
        assert!((p[(0, 0)] - 1.5).abs() < 1e-12);
    }
}
