//! Multi-task elastic-net by block coordinate descent.
//!
//! Minimizes `(1/2n)‖Y − XB‖_F² + λ Σ_j ‖B_j‖ + (τ/2)‖B‖_F²` over `B ∈ R^{p×T}`,
//! where `B_j` is row `j`. Each block update works on the Gram matrix `XᵀX` and keeps
//! the gradient `Xᵀ(Y − XB)` current, so rows that stay at zero cost `O(T)` per sweep.

mod cv;

pub use cv::{cross_validate, fold_indices, CvOptions, CvTable, GridPoint};

use nalgebra::DVector;

use crate::data::PenaltyPair;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Stop when the largest coefficient change of a sweep is at most `tol·(1 + max|B|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Warm start; the zero matrix when absent.
    pub b_init: Option<Mat>,
    /// Record the objective before the first sweep and after every sweep.
    pub track_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, b_init: None, track_objective: true }
    }
}

impl FitOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted coefficients B̂ (p×T).
    pub b_hat: Mat,
    /// F = Y − X B̂ (n×T).
    pub residual: Mat,
    /// Sorted indices of the rows of B̂ that are not exactly zero.
    pub support: Vec<usize>,
    pub penalty: PenaltyPair,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residual.nrows()
    }

    pub fn tasks(&self) -> usize {
        self.b_hat.ncols()
    }
}

const ZERO_SLACK: f64 = 1.0 + 8.0 * f64::EPSILON;

/// `max(0, 1 − threshold/‖v‖)·v`, the proximal map of `threshold·‖·‖`.
pub fn block_soft_threshold(v: &DVector<f64>, threshold: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm <= threshold {
        DVector::zeros(v.len())
    } else {
        v * (1.0 - threshold / norm)
    }
}

/// Elastic-net objective at `b`.
pub fn objective(x: &Mat, y: &Mat, b: &Mat, penalty: &PenaltyPair) -> f64 {
    let n = x.nrows() as f64;
    let r = y - x * b;
    let group: f64 = b.row_iter().map(|row| row.norm()).sum();
    r.norm_squared() / (2.0 * n) + penalty.lambda() * group + 0.5 * penalty.tau() * b.norm_squared()
}

/// Smallest `α` for which the fit at `λ = α·l1_ratio` is identically zero:
/// `max_j ‖x_jᵀY‖ / (n·l1_ratio)`.
pub fn alpha_max(x: &Mat, y: &Mat, l1_ratio: f64) -> Result<f64> {
    if !(l1_ratio > 0.0 && l1_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("l1_ratio {l1_ratio} outside (0, 1]")));
    }
    check_dims(x, y)?;
    let xty = x.tr_mul(y);
    Ok(alpha_max_from_xty(&xty, x.nrows(), l1_ratio))
}

pub(crate) fn alpha_max_from_xty(xty: &Mat, n: usize, l1_ratio: f64) -> f64 {
    let max_norm = xty.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    if max_norm == 0.0 {
        log::warn!("XᵀY is identically zero; alpha_max = 0");
    }
    max_norm / (n as f64 * l1_ratio)
}

/// `n_alphas` log-spaced values from `alpha_max` down to `eps·alpha_max`.
pub fn make_alpha_grid(alpha_max: f64, n_alphas: usize, eps: f64) -> Result<Vec<f64>> {
    if alpha_max.is_nan() || alpha_max <= 0.0 || alpha_max.is_infinite() {
        return Err(Error::InvalidArgument(format!("alpha_max must be positive, got {alpha_max}")));
    }
    if n_alphas < 2 {
        return Err(Error::InvalidArgument("n_alphas must be at least 2".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside (0, 1)")));
    }
    let last = (n_alphas - 1) as f64;
    Ok((0..n_alphas)
        .map(|i| match i {
            0 => alpha_max,
            i if i == n_alphas - 1 => alpha_max * eps,
            i => alpha_max * eps.powf(i as f64 / last),
        })
        .collect())
}

fn check_dims(x: &Mat, y: &Mat) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.nrows(), y.nrows())));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::Dimension("empty design or response".into()));
    }
    Ok(())
}

/// Sufficient statistics of a least-squares problem: `XᵀX`, `XᵀY` and `n`.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    pub xtx: Mat,
    pub xty: Mat,
    /// `‖Y‖_F²`
    pub yty: f64,
    pub n: usize,
}

impl Gram {
    pub fn new(x: &Mat, y: &Mat) -> Self {
        Gram { xtx: x.tr_mul(x), xty: x.tr_mul(y), yty: y.norm_squared(), n: x.nrows() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stopping {
    /// Largest coefficient change of a sweep at most `tol·(1 + max|B|)`.
    MaxChange(f64),
    /// Duality gap of the `n`-scaled problem at most `tol·‖Y‖_F²`, checked once the
    /// relative coefficient change drops below `tol` (the scikit-learn rule).
    DualityGap(f64),
}

/// Duality gap of `½‖Y − XB‖² + nλ‖B‖₂,₁ + ½nτ‖B‖²`, from Gram quantities only.
fn duality_gap(gram: &Gram, bt: &Mat, grad: &Mat, lambda: f64, tau: f64) -> f64 {
    let n = gram.n as f64;
    let (l1, l2) = (n * lambda, n * tau);
    let mut b_xty = 0.0;
    let mut b_grad = 0.0;
    let mut l21 = 0.0;
    let mut dual = 0.0_f64;
    for j in 0..bt.ncols() {
        let bj = bt.column(j);
        let gj = grad.column(j);
        let mut norm2 = 0.0;
        let mut xta2 = 0.0;
        for k in 0..bt.nrows() {
            b_xty += bj[k] * gram.xty[(j, k)];
            b_grad += bj[k] * gj[k];
            norm2 += bj[k] * bj[k];
            let a = gj[k] - l2 * bj[k];
            xta2 += a * a;
        }
        l21 += norm2.sqrt();
        dual = dual.max(xta2.sqrt());
    }
    let w2 = bt.norm_squared();
    let r2 = (gram.yty - b_xty - b_grad).max(0.0);
    let ry = gram.yty - b_xty;
    let (c, mut gap) = if dual > l1 {
        let c = l1 / dual;
        (c, 0.5 * (r2 + r2 * c * c))
    } else {
        (1.0, r2)
    };
    gap += l1 * l21 - c * ry + 0.5 * l2 * (1.0 + c * c) * w2;
    gap
}

pub(crate) struct CdOutcome {
    pub b: Mat,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Block coordinate descent on the Gram form. `data` enables exact objective tracking.
pub(crate) fn coordinate_descent(
    gram: &Gram,
    penalty: &PenaltyPair,
    stop: Stopping,
    max_iter: usize,
    b_init: Option<&Mat>,
    data: Option<(&Mat, &Mat)>,
) -> CdOutcome {
    let p = gram.xtx.nrows();
    let t = gram.xty.ncols();
    let n = gram.n as f64;
    let lambda = penalty.lambda();
    let tau = penalty.tau();

    // Row j of B is stored as column j of `bt` (T×p), likewise for the gradient.
    let mut bt = match b_init {
        Some(b) => b.transpose(),
        None => Mat::zeros(t, p),
    };
    let diag: Vec<f64> = (0..p).map(|j| gram.xtx[(j, j)] / n).collect();
    for (j, _) in diag.iter().enumerate().filter(|(_, &d)| d == 0.0) {
        bt.column_mut(j).fill(0.0);
    }
    let all: Vec<usize> = (0..p).filter(|&j| diag[j] != 0.0).collect();
    let mut grad = Mat::zeros(t, p);
    refresh_gradient(gram, &bt, &mut grad);

    let track = |bt: &Mat| -> Option<f64> {
        data.map(|(x, y)| objective(x, y, &bt.transpose(), penalty))
    };
    let mut objective_trace = Vec::new();
    if let Some(v) = track(&bt) {
        objective_trace.push(v);
    }

    let mut sweeper = Sweeper { xtx: gram.xtx.as_slice(), p, n, lambda, tau, diag: &diag, v: vec![0.0; t], delta: vec![0.0; t] };
    let small = |max_change: f64, bt: &Mat| -> bool {
        let max_abs = linalg::max_abs(bt);
        match stop {
            Stopping::MaxChange(tol) => max_change <= tol * (1.0 + max_abs),
            Stopping::DualityGap(tol) => max_abs == 0.0 || max_change <= tol * max_abs,
        }
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let max_change = sweeper.sweep(&mut bt, &mut grad, &all);
        if let Some(v) = track(&bt) {
            objective_trace.push(v);
        }
        if small(max_change, &bt) {
            let done = match stop {
                Stopping::MaxChange(_) => true,
                Stopping::DualityGap(tol) => duality_gap(gram, &bt, &grad, lambda, tau) <= tol * gram.yty,
            };
            if done {
                converged = true;
                break;
            }
        }
    }

    CdOutcome { b: bt.transpose(), iterations, objective_trace, converged }
}

struct Sweeper<'a> {
    xtx: &'a [f64],
    p: usize,
    n: f64,
    lambda: f64,
    tau: f64,
    diag: &'a [f64],
    v: Vec<f64>,
    delta: Vec<f64>,
}

impl Sweeper<'_> {
    /// Updates the rows in `rows` once each and returns the largest coefficient change.
    fn sweep(&mut self, bt: &mut Mat, grad: &mut Mat, rows: &[usize]) -> f64 {
        let t = bt.nrows();
        let mut max_change = 0.0_f64;
        for &j in rows {
            let d = self.diag[j];
            let bj = bt.column(j);
            let gj = grad.column(j);
            let mut norm2 = 0.0;
            let mut was_zero = true;
            for k in 0..t {
                let val = gj[k] / self.n + d * bj[k];
                self.v[k] = val;
                norm2 += val * val;
                was_zero &= bj[k] == 0.0;
            }
            let norm = norm2.sqrt();
            // The slack absorbs rounding at λ = alpha_max, where the row must stay zero.
            let scale = if norm <= self.lambda * ZERO_SLACK { 0.0 } else { (1.0 - self.lambda / norm) / (d + self.tau) };
            if scale == 0.0 && was_zero {
                continue;
            }
            let mut moved = false;
            {
                let mut bj = bt.column_mut(j);
                for k in 0..t {
                    let new = scale * self.v[k];
                    self.delta[k] = new - bj[k];
                    bj[k] = new;
                    moved |= self.delta[k] != 0.0;
                    max_change = max_change.max(self.delta[k].abs());
                }
            }
            if !moved {
                continue;
            }
            let col = &self.xtx[j * self.p..(j + 1) * self.p];
            let g = grad.as_mut_slice();
            for (kk, &a) in col.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let gk = &mut g[kk * t..(kk + 1) * t];
                for (gv, dv) in gk.iter_mut().zip(self.delta.iter()) {
                    *gv -= a * dv;
                }
            }
        }
        max_change
    }
}

/// Recomputes `grad = (XᵀY − XᵀX B)ᵀ` from the current coefficients.
fn refresh_gradient(gram: &Gram, bt: &Mat, grad: &mut Mat) {
    let t = bt.nrows();
    let p = bt.ncols();
    grad.copy_from(&gram.xty.transpose());
    let xtx = gram.xtx.as_slice();
    let g = grad.as_mut_slice();
    for j in row_support_t(bt) {
        let bj = bt.column(j);
        let col = &xtx[j * p..(j + 1) * p];
        for (kk, &a) in col.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let gk = &mut g[kk * t..(kk + 1) * t];
            for (gv, bv) in gk.iter_mut().zip(bj.iter()) {
                *gv -= a * bv;
            }
        }
    }
}

/// Support of `B` given as its transpose.
fn row_support_t(bt: &Mat) -> Vec<usize> {
    (0..bt.ncols()).filter(|&j| bt.column(j).iter().any(|&v| v != 0.0)).collect()
}

/// Sorted indices of rows with at least one nonzero entry.
pub fn row_support(b: &Mat) -> Vec<usize> {
    (0..b.nrows()).filter(|&j| b.row(j).iter().any(|&v| v != 0.0)).collect()
}

/// `X B` using only the nonzero rows of `B`.
pub(crate) fn predict(x: &Mat, b: &Mat, support: &[usize]) -> Mat {
    let mut out = Mat::zeros(x.nrows(), b.ncols());
    for &j in support {
        let xj = x.column(j);
        for t in 0..b.ncols() {
            let bjt = b[(j, t)];
            if bjt != 0.0 {
                out.column_mut(t).axpy(bjt, &xj, 1.0);
            }
        }
    }
    out
}

/// Fits the multi-task elastic-net. Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn fit(x: &Mat, y: &Mat, penalty: PenaltyPair, opts: &FitOptions) -> Result<FitResult> {
    check_dims(x, y)?;
    if !linalg::all_finite(x) {
        return Err(Error::NonFinite("x"));
    }
    if !linalg::all_finite(y) {
        return Err(Error::NonFinite("y"));
    }
    if let Some(b) = &opts.b_init {
        if b.shape() != (x.ncols(), y.ncols()) {
            return Err(Error::Dimension(format!(
                "b_init is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                x.ncols(),
                y.ncols()
            )));
        }
        if !linalg::all_finite(b) {
            return Err(Error::NonFinite("b_init"));
        }
    }
    let gram = Gram::new(x, y);
    fit_with_gram(x, y, &gram, penalty, opts)
}

pub(crate) fn fit_with_gram(
    x: &Mat,
    y: &Mat,
    gram: &Gram,
    penalty: PenaltyPair,
    opts: &FitOptions,
) -> Result<FitResult> {
    let data = opts.track_objective.then_some((x, y));
    let out = coordinate_descent(gram, &penalty, Stopping::MaxChange(opts.tol), opts.max_iter, opts.b_init.as_ref(), data);
    if !out.converged {
        log::warn!(
            "coordinate descent stopped after {} sweeps without converging (lambda={}, tau={})",
            out.iterations,
            penalty.lambda(),
            penalty.tau()
        );
    }
    let support = row_support(&out.b);
    let residual = y - predict(x, &out.b, &support);
    Ok(FitResult {
        b_hat: out.b,
        residual,
        support,
        penalty,
        iterations: out.iterations,
        objective_trace: out.objective_trace,
        converged: out.converged,
    })
}

/// Largest scaled violation of the optimality conditions of `fit` on `(x, y)`.
///
/// With `g_k = x_kᵀ(Y − XB̂) − nτ B̂_k`, active rows must satisfy
/// `g_k = nλ B̂_k / ‖B̂_k‖` and inactive rows `‖g_k‖ ≤ nλ`. Active residuals are
/// scaled by `1/(nλ)`; inactive rows contribute `max(0, ‖g_k‖/(nλ) − 1)`.
/// When `λ = 0` every row must be stationary and the scale is `1/n`.
pub fn kkt_violation(x: &Mat, y: &Mat, fit: &FitResult) -> f64 {
    let n = x.nrows() as f64;
    let lambda = fit.penalty.lambda();
    let tau = fit.penalty.tau();
    let b = &fit.b_hat;
    let f = y - x * b;
    let g = x.tr_mul(&f) - b * (n * tau);
    let scale = if lambda > 0.0 { n * lambda } else { n };
    let mut worst = 0.0_f64;
    for k in 0..b.nrows() {
        let bk = b.row(k);
        let gk = g.row(k);
        let bnorm = bk.norm();
        let v = if bnorm > 0.0 {
            (gk - bk * (n * lambda / bnorm)).norm() / scale
        } else if lambda > 0.0 {
            (gk.norm() / scale - 1.0).max(0.0)
        } else {
            gk.norm() / scale
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian, rng};

    #[test]
    fn soft_threshold_cases() {
        let v = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(block_soft_threshold(&v, 5.0), DVector::zeros(2));
        assert_eq!(block_soft_threshold(&v, 0.0), v);
        let out = block_soft_threshold(&v, 2.5);
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
        assert_eq!(block_soft_threshold(&DVector::zeros(3), 0.0), DVector::zeros(3));
    }

    #[test]
    fn alpha_max_formula() {
        let x = Mat::identity(2, 2);
        let y = Mat::from_row_slice(2, 1, &[2.0, 0.0]);
        assert_eq!(alpha_max(&x, &y, 1.0).unwrap(), 1.0);
        assert_eq!(alpha_max(&x, &Mat::zeros(2, 1), 1.0).unwrap(), 0.0);
        assert!(alpha_max(&x, &y, 0.0).is_err());
    }

    #[test]
    fn alpha_grid_by_hand() {
        let g = make_alpha_grid(1.0, 3, 0.01).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!((g[2] - 0.01).abs() < 1e-15);
        let g = make_alpha_grid(3.7, 100, 1e-3).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 3.7);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(make_alpha_grid(0.0, 10, 1e-3).is_err());
    }

    #[test]
    fn zero_fit_above_alpha_max() {
        let mut r = rng(3);
        let x = gaussian(&mut r, 30, 8);
        let y = gaussian(&mut r, 30, 3);
        let amax = alpha_max(&x, &y, 1.0).unwrap();
        let pen = PenaltyPair::new(amax, 0.0).unwrap();
        let fit = fit(&x, &y, pen, &FitOptions::default()).unwrap();
        assert!(fit.support.is_empty());
        assert_eq!(fit.residual, y);
        assert_eq!(kkt_violation(&x, &y, &fit), 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn zero_norm_column_stays_zero() {
        let mut r = rng(5);
        let mut x = gaussian(&mut r, 20, 5);
        x.column_mut(2).fill(0.0);
        let y = gaussian(&mut r, 20, 2);
        let pen = PenaltyPair::new(0.0, 0.1).unwrap();
        let mut init = Mat::from_element(5, 2, 1.0);
        init[(2, 0)] = 3.0;
        let opts = FitOptions { b_init: Some(init), ..FitOptions::default() };
        let fit = fit(&x, &y, pen, &opts).unwrap();
        assert!(fit.b_hat.row(2).iter().all(|&v| v == 0.0));
        assert!(!fit.support.contains(&2));
    }

    #[test]
    fn nonconvergence_is_flagged_not_raised() {
        let mut r = rng(9);
        let x = gaussian(&mut r, 40, 20);
        let y = gaussian(&mut r, 40, 3);
        let pen = PenaltyPair::new(0.01, 0.0).unwrap();
        let opts = FitOptions { max_iter: 1, ..FitOptions::default() };
        let fit = fit(&x, &y, pen, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = Mat::identity(3, 2);
        x[(0, 0)] = f64::NAN;
        let y = Mat::zeros(3, 1);
        let pen = PenaltyPair::new(0.1, 0.0).unwrap();
        assert!(matches!(fit(&x, &y, pen, &FitOptions::default()), Err(Error::NonFinite("x"))));
    }
}
