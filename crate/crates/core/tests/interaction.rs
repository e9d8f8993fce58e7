mod common;

use common::{brute_force_a_hat, diagonal_a_estimate, gaussian, instance, max_abs_diff, rng, toeplitz};
use mtcov::estimators::{estimate_proposed, SigmaFactor};
use mtcov::interaction::{
    assemble_restricted_system, hessian_block, interaction_matrix, interaction_matrix_dense, per_task_df_matrix,
    stack_column_fits,
};
use mtcov::linalg::{is_symmetric, sym_eigenvalues, sym_op_norm};
use mtcov::solver::{alpha_max, fit, FitOptions};
use mtcov::{Mat, PenaltyPair};
use nalgebra::DVector;
use proptest::prelude::*;

fn tight() -> FitOptions {
    FitOptions::default().with_tol(1e-12)
}

#[test]
fn matches_literal_kronecker_construction() {
    let cases = [(15, 6, 2, 0.3, 0.1), (12, 8, 3, 0.2, 0.0), (20, 5, 1, 0.1, 0.05), (10, 8, 2, 0.4, 0.2)];
    for (seed, &(n, p, t, frac, tau)) in cases.iter().enumerate() {
        let (x, y) = instance(seed as u64, n, p, t);
        let lambda = frac * alpha_max(&x, &y, 1.0).unwrap();
        let res = fit(&x, &y, PenaltyPair::new(lambda, tau).unwrap(), &tight()).unwrap();
        assert!(!res.support.is_empty());
        let fast = interaction_matrix(&x, &res).unwrap();
        let oracle = brute_force_a_hat(&x, &res.b_hat, lambda, tau);
        let diff = max_abs_diff(&fast.a_hat, &oracle);
        assert!(diff < 1e-8, "case {seed}: diff {diff}");
        let dense = interaction_matrix_dense(&x, &res).unwrap();
        assert!(max_abs_diff(&dense.a_hat, &oracle) < 1e-8);
        assert_eq!(fast.system_dim, t * res.support.len());
    }
}

#[test]
fn ridge_gives_scaled_identity() {
    let (x, y) = instance(30, 30, 10, 3);
    let tau = 0.2;
    let res = fit(&x, &y, PenaltyPair::new(0.0, tau).unwrap(), &FitOptions::default().with_tol(1e-14)).unwrap();
    let a = interaction_matrix(&x, &res).unwrap().a_hat;
    let xtx = x.transpose() * &x;
    let df = ((&xtx + Mat::identity(10, 10) * (30.0 * tau)).try_inverse().unwrap() * &xtx).trace();
    assert!(max_abs_diff(&a, &(Mat::identity(3, 3) * df)) < 1e-8);
}

#[test]
fn lasso_single_task_counts_the_support() {
    for seed in 0..5 {
        let (x, y) = instance(seed, 40, 15, 1);
        let lambda = 0.1 * alpha_max(&x, &y, 1.0).unwrap();
        let res = fit(&x, &y, PenaltyPair::new(lambda, 0.0).unwrap(), &tight()).unwrap();
        let a = interaction_matrix(&x, &res).unwrap().a_hat;
        assert!((a[(0, 0)] - res.support.len() as f64).abs() < 1e-8);
    }
}

#[test]
fn empty_support_gives_zero() {
    let (x, y) = instance(2, 20, 6, 3);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    let res = fit(&x, &y, PenaltyPair::new(amax, 0.1).unwrap(), &FitOptions::default()).unwrap();
    let out = interaction_matrix(&x, &res).unwrap();
    assert_eq!(out.a_hat, Mat::zeros(3, 3));
    assert_eq!(out.system_dim, 0);
}

#[test]
fn hessian_block_examples() {
    let h = hessian_block(&DVector::from_vec(vec![1.0, 0.0]), 2.0).unwrap();
    assert_eq!(h, Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
    let mut r = rng(4);
    let b = gaussian(&mut r, 4, 1).column(0).into_owned();
    let h = hessian_block(&b, 0.7).unwrap();
    assert!((&h * &b).amax() < 1e-12);
    assert!((h.trace() - 0.7 * 3.0 / b.norm()).abs() < 1e-12);
    assert!(hessian_block(&DVector::zeros(3), 1.0).is_err());
}

#[test]
fn restricted_system_examples() {
    let mut r = rng(5);
    let x_s = gaussian(&mut r, 12, 3);
    let (n, tau) = (12, 0.3);
    let k = x_s.transpose() * &x_s + Mat::identity(3, 3) * (n as f64 * tau);
    let ridge = assemble_restricted_system(&x_s, &[], tau, n).unwrap();
    assert!(max_abs_diff(&ridge, &k) < 1e-12);
    // T = 1: every Hessian block vanishes
    let h: Vec<Mat> = (0..3).map(|_| hessian_block(&DVector::from_vec(vec![-1.3]), 0.5).unwrap()).collect();
    let scalar = assemble_restricted_system(&x_s, &h, tau, n).unwrap();
    assert!(max_abs_diff(&scalar, &k) < 1e-12);
    let h2: Vec<Mat> = (0..3).map(|_| hessian_block(&gaussian(&mut r, 2, 1).column(0).into_owned(), 0.5).unwrap()).collect();
    let sys = assemble_restricted_system(&x_s, &h2, tau, n).unwrap();
    assert!(is_symmetric(&sys, 1e-14));
    assert!(assemble_restricted_system(&x_s, &h2[..2], tau, n).is_err());
}

#[test]
fn per_task_df_examples() {
    let (x, y) = instance(6, 30, 10, 2);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    let zero = |t: usize| fit(&x, &y.columns(t, 1).into_owned(), PenaltyPair::new(2.0 * amax, 0.0).unwrap(), &FitOptions::default()).unwrap();
    assert_eq!(per_task_df_matrix(&[zero(0), zero(1)]), Mat::zeros(2, 2));
}

#[test]
fn per_task_recipe_matches_entrywise_formula() {
    let (x, y) = instance(12, 60, 25, 2);
    let sigma = toeplitz(25, 0.5);
    let fits: Vec<_> = (0..2)
        .map(|t| {
            let yt = y.columns(t, 1).into_owned();
            let lambda = 0.15 * alpha_max(&x, &yt, 1.0).unwrap();
            fit(&x, &yt, PenaltyPair::new(lambda, 0.0).unwrap(), &tight()).unwrap()
        })
        .collect();
    let a = per_task_df_matrix(&fits);
    let d: Vec<f64> = fits.iter().map(|f| f.support.len() as f64).collect();
    assert_eq!(a, Mat::from_diagonal(&DVector::from_vec(d.clone())));
    let (_, f) = stack_column_fits(&fits).unwrap();
    let ours = estimate_proposed(&x, &f, &a, &SigmaFactor::new(&sigma).unwrap()).unwrap().s_hat;
    let oracle = diagonal_a_estimate(&x, &f, &d, &sigma);
    assert!(max_abs_diff(&ours, &oracle) < 1e-10 * oracle.amax().max(1.0));
}

#[test]
fn rank_deficient_lasso_uses_the_pseudo_inverse() {
    // p > n with τ = 0 and a support larger than n
    let (x, y) = instance(13, 8, 14, 2);
    let lambda = 1e-3 * alpha_max(&x, &y, 1.0).unwrap();
    let res = fit(&x, &y, PenaltyPair::new(lambda, 0.0).unwrap(), &FitOptions { max_iter: 200_000, ..tight() }).unwrap();
    let fast = interaction_matrix(&x, &res).unwrap();
    let oracle = brute_force_a_hat(&x, &res.b_hat, lambda, 0.0);
    assert!(max_abs_diff(&fast.a_hat, &oracle) < 1e-6 * oracle.amax().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn a_hat_is_symmetric_psd_and_bounded(seed in 0u64..1000, frac in 0.02f64..0.9, tau in 0.0f64..0.5, t in 1usize..4) {
        let (x, y) = instance(seed, 25, 18, t);
        let lambda = frac * alpha_max(&x, &y, 1.0).unwrap();
        let res = fit(&x, &y, PenaltyPair::new(lambda, tau).unwrap(), &FitOptions::default()).unwrap();
        let a = interaction_matrix(&x, &res).unwrap().a_hat;
        prop_assert!(is_symmetric(&a, 1e-10));
        let tr = a.trace();
        prop_assert!(sym_eigenvalues(&a).iter().all(|&e| e >= -1e-9 * tr.max(1.0)));
        prop_assert!(tr >= -1e-9 && tr <= (25 * t) as f64 + 1e-6);
        if tau > 0.0 {
            prop_assert!(sym_op_norm(&a) <= 25.0 + 1e-6);
        }
    }
}
