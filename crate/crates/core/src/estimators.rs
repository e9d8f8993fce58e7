//! Noise covariance estimators and the error estimators that share their algebra.
//!
//! Every function here is a pure function of its matrix inputs. Σ⁻¹ is only ever
//! applied through a Cholesky factor; `FᵀXΣ⁻¹XᵀF` is formed as `GᵀG` with
//! `G = L⁻¹XᵀF`, `Σ = LLᵀ`, so no n×n matrix is built.

use nalgebra::{Cholesky, Dyn};

use crate::data::{CovarianceEstimate, Method};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// `‖Â/n‖_op` at or above `1 − SATURATION_MARGIN` makes `nI − Â` unusable.
const SATURATION_MARGIN: f64 = 1e-12;

/// Cholesky factor of the known design covariance Σ.
#[derive(Debug, Clone)]
pub struct SigmaFactor {
    sigma: Mat,
    chol: Cholesky<f64, Dyn>,
}

impl SigmaFactor {
    pub fn new(sigma: &Mat) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension(format!("sigma is {}x{}", sigma.nrows(), sigma.ncols())));
        }
        if !linalg::all_finite(sigma) {
            return Err(Error::NonFinite("sigma"));
        }
        let chol = linalg::cholesky(sigma, "sigma")?;
        Ok(SigmaFactor { sigma: sigma.clone(), chol })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    /// `MᵀXΣ⁻¹XᵀM` for an n×T matrix `M`.
    pub fn quad_form(&self, x: &Mat, m: &Mat) -> Result<Mat> {
        if x.ncols() != self.dim() || x.nrows() != m.nrows() {
            return Err(Error::Dimension(format!(
                "x is {}x{}, sigma is {}x{}, right factor has {} rows",
                x.nrows(),
                x.ncols(),
                self.dim(),
                self.dim(),
                m.nrows()
            )));
        }
        let mut g = x.tr_mul(m);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut g);
        Ok(g.tr_mul(&g))
    }

    /// `‖Σ^{1/2}B‖_F² = trace(BᵀΣB)`.
    pub fn energy(&self, b: &Mat) -> f64 {
        (b.transpose() * &self.sigma * b).trace()
    }
}

/// `(1/n) FᵀF`.
pub fn estimate_naive(f: &Mat) -> CovarianceEstimate {
    CovarianceEstimate::new(gram_over_n(f), Method::Naive).with_meta("n", f.nrows())
}

/// `(1/n) EᵀE` from the true noise.
pub fn estimate_oracle(e: &Mat) -> CovarianceEstimate {
    CovarianceEstimate::new(gram_over_n(e), Method::Oracle).with_meta("n", e.nrows())
}

fn gram_over_n(m: &Mat) -> Mat {
    m.tr_mul(m) / m.nrows().max(1) as f64
}

/// Method-of-moments estimate
/// `((n+1+p)/(n(n+1))) YᵀY − (1/(n(n+1))) YᵀXΣ⁻¹XᵀY`. May be indefinite.
pub fn estimate_mm(x: &Mat, y: &Mat, sigma: &SigmaFactor) -> Result<CovarianceEstimate> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let q = sigma.quad_form(x, y)?;
    let s = y.tr_mul(y) * ((nf + 1.0 + p as f64) / (nf * (nf + 1.0))) - q / (nf * (nf + 1.0));
    let est = CovarianceEstimate::new(s, Method::Mm).with_meta("n", n).with_meta("p", p);
    let psd = est.is_psd();
    Ok(est.with_meta("psd", psd))
}

/// Quantities of the residual shared by the proposed, generalization-error and
/// out-of-sample estimators.
#[derive(Debug, Clone)]
pub struct ResidualMoments {
    pub n: usize,
    pub p: usize,
    /// `FᵀF`.
    pub ftf: Mat,
    /// `FᵀXΣ⁻¹XᵀF`.
    pub whitened: Mat,
}

impl ResidualMoments {
    pub fn new(x: &Mat, f: &Mat, sigma: &SigmaFactor) -> Result<Self> {
        if x.nrows() != f.nrows() {
            return Err(Error::Dimension(format!("x has {} rows, residual has {}", x.nrows(), f.nrows())));
        }
        if !linalg::all_finite(f) {
            return Err(Error::NonFinite("residual"));
        }
        Ok(ResidualMoments { n: x.nrows(), p: x.ncols(), ftf: f.tr_mul(f), whitened: sigma.quad_form(x, f)? })
    }
}

/// `(I − Â/n)⁻¹`, refusing interaction matrices that saturate n.
fn deflation(a_hat: &Mat, n: usize, t: usize) -> Result<Mat> {
    if a_hat.shape() != (t, t) {
        return Err(Error::Dimension(format!("a_hat is {}x{}, expected {t}x{t}", a_hat.nrows(), a_hat.ncols())));
    }
    if !linalg::all_finite(a_hat) {
        return Err(Error::NonFinite("a_hat"));
    }
    let scaled = a_hat / n as f64;
    let norm = linalg::op_norm(&scaled);
    if norm >= 1.0 - SATURATION_MARGIN {
        return Err(Error::Saturated(norm));
    }
    linalg::inverse(&(Mat::identity(t, t) - scaled), "I - A/n")
}

/// The debiased estimate
/// `(nI − Â)⁻¹ [Fᵀ((p+n)I − XΣ⁻¹Xᵀ)F − ÂFᵀF − FᵀFÂ] (nI − Â)⁻¹`.
///
/// `f` is the residual `Y − XB̂` of whichever fit produced `a_hat`.
pub fn estimate_proposed(x: &Mat, f: &Mat, a_hat: &Mat, sigma: &SigmaFactor) -> Result<CovarianceEstimate> {
    let moments = ResidualMoments::new(x, f, sigma)?;
    proposed_from_moments(&moments, a_hat)
}

pub fn proposed_from_moments(m: &ResidualMoments, a_hat: &Mat) -> Result<CovarianceEstimate> {
    let t = m.ftf.nrows();
    let nf = m.n as f64;
    let d = deflation(a_hat, m.n, t)?;
    // (nI − Â)⁻¹ = (I − Â/n)⁻¹ / n
    let inner = &m.ftf * (nf + m.p as f64) - &m.whitened - a_hat * &m.ftf - &m.ftf * a_hat;
    let s = &d * inner * &d / (nf * nf);
    let est = CovarianceEstimate::new(s, Method::Proposed)
        .with_meta("n", m.n)
        .with_meta("p", m.p)
        .with_meta("df", linalg::trace(a_hat));
    let psd = est.is_psd();
    Ok(est.with_meta("psd", psd))
}

/// Estimate of `trace(S) + ‖Σ^{1/2}(B̂ − B*)‖_F²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenErrorEstimate {
    pub value: f64,
}

/// `‖(I − Â/n)⁻¹Fᵀ‖_F² / n`.
pub fn estimate_gen_error(f: &Mat, a_hat: &Mat) -> Result<GenErrorEstimate> {
    let n = f.nrows();
    let d = deflation(a_hat, n, f.ncols())?;
    let value = (d * f.transpose()).norm_squared() / n as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("generalization error"));
    }
    Ok(GenErrorEstimate { value })
}

/// Estimate of the out-of-sample error matrix `HᵀH`, `H = Σ^{1/2}(B̂ − B*)`.
#[derive(Debug, Clone)]
pub struct OutOfSampleError {
    pub matrix: Mat,
    pub is_psd: bool,
}

/// `(1/n²)(I − Â/n)⁻¹ (FᵀXΣ⁻¹XᵀF + ÂFᵀF + FᵀFÂ − pFᵀF)(I − Â/n)⁻¹`.
pub fn estimate_oos_error(x: &Mat, f: &Mat, a_hat: &Mat, sigma: &SigmaFactor) -> Result<OutOfSampleError> {
    let moments = ResidualMoments::new(x, f, sigma)?;
    oos_from_moments(&moments, a_hat)
}

pub fn oos_from_moments(m: &ResidualMoments, a_hat: &Mat) -> Result<OutOfSampleError> {
    let t = m.ftf.nrows();
    let nf = m.n as f64;
    let d = deflation(a_hat, m.n, t)?;
    let inner = &m.whitened + a_hat * &m.ftf + &m.ftf * a_hat - &m.ftf * m.p as f64;
    let matrix = linalg::symmetrize(&(&d * inner * &d / (nf * nf)));
    let is_psd = linalg::is_psd(&matrix, 1e-12);
    Ok(OutOfSampleError { matrix, is_psd })
}
