//! Reference implementations used as test oracles. They follow the defining formulas
//! literally and share no code with the library beyond the matrix type.
#![allow(dead_code)]

use mtcov::Mat;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random instance `Y = XB + E` with a few nonzero rows in `B`.
pub fn instance(seed: u64, n: usize, p: usize, t: usize) -> (Mat, Mat) {
    let mut r = rng(seed);
    let x = gaussian(&mut r, n, p);
    let mut b = gaussian(&mut r, p, t);
    for j in 0..p {
        if j % 3 != 0 {
            b.row_mut(j).fill(0.0);
        }
    }
    let y = &x * b + gaussian(&mut r, n, t);
    (x, y)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Single-task lasso `(1/2n)‖y − Xβ‖² + λ‖β‖₁` by FISTA with constant step.
pub fn lasso_fista(x: &Mat, y: &DVector<f64>, lambda: f64, iters: usize) -> DVector<f64> {
    let n = x.nrows() as f64;
    let lip = (x.transpose() * x).symmetric_eigenvalues().max() / n;
    let step = 1.0 / lip;
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut z = beta.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let grad = x.transpose() * (x * &z - y) / n;
        let v = &z - grad * step;
        let next = v.map(|u| u.signum() * (u.abs() - step * lambda).max(0.0));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &beta) * ((t - 1.0) / t_next);
        beta = next;
        t = t_next;
    }
    beta
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Â from the literal `pT×pT` construction:
/// `M = I_T ⊗ (X_SᵀX_S + nτP_S) + n Σ_{k∈S} H^(k) ⊗ e_k e_kᵀ` and
/// `Â_{tt'} = Σ_i (e_tᵀ ⊗ x_iᵀ) M† (e_t' ⊗ x_i)`, with `vec` stacking columns of `B`.
pub fn brute_force_a_hat(x: &Mat, b_hat: &Mat, lambda: f64, tau: f64) -> Mat {
    let (n, p) = x.shape();
    let t = b_hat.ncols();
    let nf = n as f64;
    let active: Vec<usize> = (0..p).filter(|&j| b_hat.row(j).iter().any(|&v| v != 0.0)).collect();
    let mut proj = Mat::zeros(p, p);
    for &k in &active {
        proj[(k, k)] = 1.0;
    }
    let x_s = x * &proj;
    let m1 = kron(&Mat::identity(t, t), &(x_s.transpose() * &x_s + &proj * (nf * tau)));
    let mut m = m1;
    for &k in &active {
        let b = b_hat.row(k).transpose();
        let norm = b.norm();
        let h = (Mat::identity(t, t) - &b * b.transpose() / (norm * norm)) * (lambda / norm);
        let mut ek = Mat::zeros(p, p);
        ek[(k, k)] = 1.0;
        m += kron(&h, &ek) * nf;
    }
    let m_pinv = m.clone().pseudo_inverse(1e-10 * m.norm().max(1.0)).expect("svd");
    let mut a = Mat::zeros(t, t);
    for i in 0..n {
        let xi = x.row(i).transpose();
        for s in 0..t {
            for u in 0..t {
                let mut acc = 0.0;
                for j in 0..p {
                    for l in 0..p {
                        acc += xi[j] * m_pinv[(s * p + j, u * p + l)] * xi[l];
                    }
                }
                a[(s, u)] += acc;
            }
        }
    }
    a
}

/// Scalar (`T = 1`) estimator:
/// `(n − df)⁻² { ‖r‖²(n + p − 2df) − ‖Σ^{-1/2}Xᵀr‖² }`, with an explicit inverse of Σ.
pub fn scalar_estimate(x: &Mat, r: &DVector<f64>, df: f64, sigma: &Mat) -> f64 {
    let (n, p) = x.shape();
    let (n, p) = (n as f64, p as f64);
    let sigma_inv = sigma.clone().try_inverse().expect("invertible");
    let xtr = x.transpose() * r;
    let quad = (xtr.transpose() * sigma_inv * &xtr)[(0, 0)];
    (r.norm_squared() * (n + p - 2.0 * df) - quad) / ((n - df) * (n - df))
}

/// Entrywise form of the proposed estimator for a diagonal `Â = diag(d)`:
/// `[(p+n)f_tᵀf_u − f_tᵀXΣ⁻¹Xᵀf_u − (d_t + d_u)f_tᵀf_u] / ((n − d_t)(n − d_u))`.
pub fn diagonal_a_estimate(x: &Mat, f: &Mat, d: &[f64], sigma: &Mat) -> Mat {
    let (n, p) = x.shape();
    let (n, p) = (n as f64, p as f64);
    let sigma_inv = sigma.clone().try_inverse().expect("invertible");
    let t = f.ncols();
    Mat::from_fn(t, t, |a, b| {
        let fa = f.column(a);
        let fb = f.column(b);
        let ff = fa.dot(&fb);
        let q = ((x.transpose() * fa).transpose() * &sigma_inv * (x.transpose() * fb))[(0, 0)];
        ((p + n) * ff - q - (d[a] + d[b]) * ff) / ((n - d[a]) * (n - d[b]))
    })
}

/// `Σ_{jk} = ρ^{|j−k|}`.
pub fn toeplitz(p: usize, rho: f64) -> Mat {
    Mat::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Mat {
    gaussian(rng, p, p).qr().q()
}
