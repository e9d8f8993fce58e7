//! The interaction matrix Â of a multi-task elastic-net fit.
//!
//! With `Ŝ` the support of B̂, `K = X_ŜᵀX_Ŝ` and the Hessian blocks
//! `H^(k) = λ‖b_k‖⁻¹(I_T − b_k b_kᵀ/‖b_k‖²)`, the restricted system is
//!
//! ```text
//! M = I_T ⊗ (K + nτ I_s) + n Σ_k H^(k) ⊗ e_k e_kᵀ      (size T·s, task-major)
//! ```
//!
//! and `Â_{t,t'} = trace(G_{t,t'} K)` where `G = M†` is split into s×s blocks.
//!
//! Writing `n H^(k) = c_k (I − u_k u_kᵀ)` with `c_k = nλ/‖b_k‖`, the system is a rank-s
//! downdate of a Kronecker product, `M = K̃ ⊗ I_T − U Uᵀ` (row-major ordering) with
//! `K̃ = K + nτ I + diag(c)`. The Woodbury identity then reduces everything to s×s
//! solves:
//!
//! ```text
//! Â = trace(K̃⁻¹K)·I_T + Vᵀ (W ∘ K̃⁻¹ K K̃⁻¹) V,
//! W = (I_s − K̃⁻¹ ∘ V Vᵀ)⁻¹,   row k of V = √c_k · u_k.
//! ```
//!
//! When the capacitance `I_s − K̃⁻¹ ∘ VVᵀ` is singular or badly conditioned (which only
//! happens when `M` itself is), the full T·s system is assembled and pseudo-inverted.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::solver::FitResult;

/// Systems up to this size also report their smallest eigenvalue.
const MIN_EIG_MAX_DIM: usize = 300;
/// Relative eigenvalue cutoff of the pseudo-inverse.
const PINV_CUTOFF: f64 = 1e-12;
/// Squared ratio of Cholesky pivots below which a factored system is treated as singular.
const RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    Cholesky,
    EigenPinv,
}

#[derive(Debug, Clone)]
pub struct InteractionResult {
    /// Â (T×T, symmetric PSD).
    pub a_hat: Mat,
    pub support: Vec<usize>,
    /// `T·|Ŝ|`.
    pub system_dim: usize,
    pub factorization: Factorization,
    /// Smallest eigenvalue of the restricted system, computed for small systems only.
    pub min_eig: Option<f64>,
}

impl InteractionResult {
    pub fn trace(&self) -> f64 {
        linalg::trace(&self.a_hat)
    }

    /// `‖Â/n‖_op`.
    pub fn scaled_op_norm(&self, n: usize) -> f64 {
        linalg::sym_op_norm(&self.a_hat) / n as f64
    }
}

/// Hessian of `u ↦ λ‖u‖` at `u = b_k ≠ 0`.
pub fn hessian_block(b_k: &DVector<f64>, lambda: f64) -> Result<Mat> {
    let norm = b_k.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("hessian block of a zero row".into()));
    }
    let t = b_k.len();
    let u = b_k / norm;
    Ok((Mat::identity(t, t) - &u * u.transpose()) * (lambda / norm))
}

/// Dense restricted system in task-major order: block `(t, t')` is
/// `δ_{tt'}(X_ŜᵀX_Ŝ + nτ I) + n·diag_k(H^(k)_{t,t'})`. An empty `h_blocks` means no
/// curvature term (λ = 0).
pub fn assemble_restricted_system(x_s: &Mat, h_blocks: &[Mat], tau: f64, n: usize) -> Result<Mat> {
    let s = x_s.ncols();
    if s == 0 {
        return Err(Error::Dimension("empty support".into()));
    }
    let t = match h_blocks.first() {
        Some(h) => h.nrows(),
        None => 1,
    };
    if !h_blocks.is_empty() && h_blocks.len() != s {
        return Err(Error::Dimension(format!("{} hessian blocks for a support of size {s}", h_blocks.len())));
    }
    if h_blocks.iter().any(|h| h.shape() != (t, t)) {
        return Err(Error::Dimension("hessian blocks must all be T×T".into()));
    }
    assemble(x_s, h_blocks, t, tau, n)
}

fn assemble(x_s: &Mat, h_blocks: &[Mat], t: usize, tau: f64, n: usize) -> Result<Mat> {
    let s = x_s.ncols();
    let nf = n as f64;
    let mut k = x_s.tr_mul(x_s);
    for i in 0..s {
        k[(i, i)] += nf * tau;
    }
    let mut m = Mat::zeros(t * s, t * s);
    for a in 0..t {
        m.view_mut((a * s, a * s), (s, s)).copy_from(&k);
    }
    for (kk, h) in h_blocks.iter().enumerate() {
        for a in 0..t {
            for b in 0..t {
                m[(a * s + kk, b * s + kk)] += nf * h[(a, b)];
            }
        }
    }
    Ok(linalg::symmetrize(&m))
}

/// Squared pivot ratio of a Cholesky factor above the conditioning threshold.
fn well_conditioned(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = ch.l_dirty();
    let (lo, hi) = (0..l.nrows()).fold((f64::INFINITY, 0.0_f64), |(lo, hi), i| {
        (lo.min(l[(i, i)]), hi.max(l[(i, i)]))
    });
    hi > 0.0 && (lo / hi).powi(2) >= RCOND
}

fn columns(x: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

fn check_fit(x: &Mat, fit: &FitResult) -> Result<()> {
    if x.ncols() != fit.b_hat.nrows() {
        return Err(Error::Dimension(format!(
            "x has {} columns, b_hat has {} rows",
            x.ncols(),
            fit.b_hat.nrows()
        )));
    }
    if !linalg::all_finite(&fit.b_hat) {
        return Err(Error::NonFinite("b_hat"));
    }
    Ok(())
}

fn zero_result(t: usize) -> InteractionResult {
    InteractionResult {
        a_hat: Mat::zeros(t, t),
        support: Vec::new(),
        system_dim: 0,
        factorization: Factorization::Cholesky,
        min_eig: None,
    }
}

fn hessian_blocks(fit: &FitResult) -> Result<Vec<Mat>> {
    let lambda = fit.penalty.lambda();
    fit.support
        .iter()
        .map(|&k| hessian_block(&fit.b_hat.row(k).transpose(), lambda))
        .collect()
}

/// Computes Â from the support-restricted system through s×s solves.
pub fn interaction_matrix(x: &Mat, fit: &FitResult) -> Result<InteractionResult> {
    check_fit(x, fit)?;
    let t = fit.b_hat.ncols();
    if fit.support.is_empty() {
        return Ok(zero_result(t));
    }
    let n = x.nrows();
    let nf = n as f64;
    let s = fit.support.len();
    let lambda = fit.penalty.lambda();
    let tau = fit.penalty.tau();

    let x_s = columns(x, &fit.support);
    let k = x_s.tr_mul(&x_s);

    // V rows: sqrt(c_k) u_k = sqrt(nλ/‖b_k‖) b_k/‖b_k‖
    let mut v = Mat::zeros(s, t);
    let mut k_tilde = k.clone();
    for (i, &j) in fit.support.iter().enumerate() {
        let row = fit.b_hat.row(j);
        let norm = row.norm();
        let c = nf * lambda / norm;
        k_tilde[(i, i)] += nf * tau + c;
        v.row_mut(i).copy_from(&(row * (c.sqrt() / norm)));
    }

    let kt_chol = match nalgebra::Cholesky::new(k_tilde) {
        Some(ch) if well_conditioned(&ch) => ch,
        _ => return interaction_matrix_dense(x, fit),
    };
    let kt_inv = kt_chol.inverse();
    let base = kt_inv.component_mul(&k).sum();
    let mut a_hat = Mat::identity(t, t) * base;

    if lambda > 0.0 && t > 1 {
        let vvt = &v * v.transpose();
        let cap = Mat::identity(s, s) - kt_inv.component_mul(&vvt);
        let Some(cap_chol) = nalgebra::Cholesky::new(linalg::symmetrize(&cap)) else {
            return interaction_matrix_dense(x, fit);
        };
        if !well_conditioned(&cap_chol) {
            return interaction_matrix_dense(x, fit);
        }
        let w = cap_chol.inverse();
        let p = &kt_inv * &k * &kt_inv;
        let core = w.component_mul(&p);
        a_hat += v.transpose() * core * &v;
    } else if lambda > 0.0 {
        // T = 1: the Hessian blocks vanish and M = K + nτI, which may be singular.
        if tau == 0.0 {
            return interaction_matrix_dense(x, fit);
        }
        let mut m = k.clone();
        for i in 0..s {
            m[(i, i)] += nf * tau;
        }
        let m_inv = match nalgebra::Cholesky::new(m) {
            Some(ch) if well_conditioned(&ch) => ch.inverse(),
            _ => return interaction_matrix_dense(x, fit),
        };
        a_hat = Mat::identity(1, 1) * m_inv.component_mul(&k).sum();
    }

    let min_eig = if t * s <= MIN_EIG_MAX_DIM {
        let m = assemble(&x_s, &hessian_blocks(fit)?, t, tau, n)?;
        Some(linalg::eig_range(&m).0)
    } else {
        None
    };

    Ok(InteractionResult {
        a_hat: linalg::symmetrize(&a_hat),
        support: fit.support.clone(),
        system_dim: t * s,
        factorization: Factorization::Cholesky,
        min_eig,
    })
}

/// Computes Â by assembling the full T·|Ŝ| restricted system. Uses Cholesky when the
/// system is positive definite and an eigendecomposition pseudo-inverse otherwise.
pub fn interaction_matrix_dense(x: &Mat, fit: &FitResult) -> Result<InteractionResult> {
    check_fit(x, fit)?;
    let t = fit.b_hat.ncols();
    if fit.support.is_empty() {
        return Ok(zero_result(t));
    }
    let n = x.nrows();
    let s = fit.support.len();
    let x_s = columns(x, &fit.support);
    let k = x_s.tr_mul(&x_s);
    let m = assemble(&x_s, &hessian_blocks(fit)?, t, fit.penalty.tau(), n)?;

    let min_eig = (t * s <= MIN_EIG_MAX_DIM).then(|| linalg::eig_range(&m).0);
    let (g, factorization) = match nalgebra::Cholesky::new(m.clone()) {
        Some(ch) if well_conditioned(&ch) => (ch.inverse(), Factorization::Cholesky),
        _ => (linalg::sym_pinv(&m, PINV_CUTOFF), Factorization::EigenPinv),
    };

    let mut a_hat = Mat::zeros(t, t);
    for a in 0..t {
        for b in 0..t {
            a_hat[(a, b)] = g.view((a * s, b * s), (s, s)).component_mul(&k).sum();
        }
    }
    Ok(InteractionResult {
        a_hat: linalg::symmetrize(&a_hat),
        support: fit.support.clone(),
        system_dim: t * s,
        factorization,
        min_eig,
    })
}

/// `diag(‖β̂^(1)‖₀, …, ‖β̂^(T)‖₀)` for tasks fitted independently.
pub fn per_task_df_matrix(column_fits: &[FitResult]) -> Mat {
    let counts: Vec<f64> = column_fits
        .iter()
        .map(|f| f.b_hat.iter().filter(|&&v| v != 0.0).count() as f64)
        .collect();
    Mat::from_diagonal(&DVector::from_vec(counts))
}

/// Stacks independent single-task fits into `(B̂, F)` with one column per task.
pub fn stack_column_fits(column_fits: &[FitResult]) -> Result<(Mat, Mat)> {
    let first = column_fits
        .first()
        .ok_or_else(|| Error::InvalidArgument("no column fits".into()))?;
    let (p, n) = (first.b_hat.nrows(), first.residual.nrows());
    let t = column_fits.len();
    let mut b = Mat::zeros(p, t);
    let mut f = Mat::zeros(n, t);
    for (j, fit) in column_fits.iter().enumerate() {
        if fit.b_hat.shape() != (p, 1) || fit.residual.shape() != (n, 1) {
            return Err(Error::Dimension("column fits must be single-task with equal shapes".into()));
        }
        b.set_column(j, &fit.b_hat.column(0));
        f.set_column(j, &fit.residual.column(0));
    }
    Ok((b, f))
}
