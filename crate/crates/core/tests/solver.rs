mod common;

use common::{gaussian, instance, lasso_fista, max_abs_diff, rng};
use mtcov::solver::{alpha_max, fit, kkt_violation, objective, row_support, FitOptions};
use mtcov::{Mat, PenaltyPair};
use proptest::prelude::*;

fn tight(tol: f64) -> FitOptions {
    FitOptions::default().with_tol(tol)
}

#[test]
fn single_task_lasso_matches_fista() {
    let (x, y) = instance(11, 20, 5, 1);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    for frac in [0.05, 0.2, 0.5] {
        let lambda = frac * amax;
        let res = fit(&x, &y, PenaltyPair::new(lambda, 0.0).unwrap(), &tight(1e-13)).unwrap();
        let oracle = lasso_fista(&x, &y.column(0).into_owned(), lambda, 200_000);
        let diff = (res.b_hat.column(0) - oracle).amax();
        assert!(diff < 1e-6, "lambda {lambda}: diff {diff}");
    }
}

#[test]
fn ridge_matches_closed_form() {
    let (x, y) = instance(3, 10, 4, 2);
    let tau = 0.3;
    let res = fit(&x, &y, PenaltyPair::new(0.0, tau).unwrap(), &tight(1e-14)).unwrap();
    let n = x.nrows() as f64;
    let closed = (x.transpose() * &x + Mat::identity(4, 4) * (n * tau)).try_inverse().unwrap() * x.transpose() * &y;
    assert!(max_abs_diff(&res.b_hat, &closed) < 1e-8);
    assert_eq!(res.support, vec![0, 1, 2, 3]);
}

#[test]
fn kkt_holds_after_convergence() {
    let (x, y) = instance(5, 50, 20, 3);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    for (lambda, tau) in [(0.1 * amax, 0.0), (0.3 * amax, 0.05), (0.05 * amax, 0.5)] {
        let res = fit(&x, &y, PenaltyPair::new(lambda, tau).unwrap(), &tight(1e-10)).unwrap();
        assert!(res.converged);
        let v = kkt_violation(&x, &y, &res);
        assert!(v <= 1e-6, "violation {v} at lambda {lambda}, tau {tau}");
    }
}

#[test]
fn kkt_detects_perturbation() {
    let (x, y) = instance(5, 50, 20, 3);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    let mut res = fit(&x, &y, PenaltyPair::new(0.1 * amax, 0.0).unwrap(), &tight(1e-10)).unwrap();
    let k = res.support[0];
    res.b_hat[(k, 0)] += 0.1;
    assert!(kkt_violation(&x, &y, &res) > 1e-3);
}

#[test]
fn zero_fit_has_zero_violation() {
    let (x, y) = instance(8, 30, 10, 2);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    let res = fit(&x, &y, PenaltyPair::new(amax, 0.0).unwrap(), &FitOptions::default()).unwrap();
    assert!(res.support.is_empty());
    assert_eq!(res.residual, y);
    assert_eq!(kkt_violation(&x, &y, &res), 0.0);
}

#[test]
fn empty_support_just_above_alpha_max() {
    for seed in 0..5 {
        let (x, y) = instance(seed, 40, 15, 3);
        for r in [0.5, 1.0] {
            let amax = alpha_max(&x, &y, r).unwrap();
            let pen = PenaltyPair::from_alpha(1.01 * amax, r).unwrap();
            let res = fit(&x, &y, pen, &FitOptions::default()).unwrap();
            assert!(res.support.is_empty(), "seed {seed}, r {r}");
        }
        // just below, something enters
        let amax = alpha_max(&x, &y, 1.0).unwrap();
        let res = fit(&x, &y, PenaltyPair::new(0.95 * amax, 0.0).unwrap(), &FitOptions::default()).unwrap();
        assert!(!res.support.is_empty());
    }
}

#[test]
fn alpha_max_by_hand() {
    let x = Mat::identity(2, 2);
    let y = Mat::from_row_slice(2, 1, &[2.0, 0.0]);
    assert_eq!(alpha_max(&x, &y, 1.0).unwrap(), 1.0);
    assert_eq!(alpha_max(&x, &y, 0.5).unwrap(), 2.0);
    assert_eq!(alpha_max(&x, &Mat::zeros(2, 1), 1.0).unwrap(), 0.0);
}

#[test]
fn lasso_is_positively_homogeneous() {
    let (x, y) = instance(21, 40, 12, 3);
    let lambda = 0.2 * alpha_max(&x, &y, 1.0).unwrap();
    let base = fit(&x, &y, PenaltyPair::new(lambda, 0.0).unwrap(), &tight(1e-13)).unwrap();
    let scaled = fit(&x, &(&y * 2.0), PenaltyPair::new(2.0 * lambda, 0.0).unwrap(), &tight(1e-13)).unwrap();
    assert_eq!(base.support, scaled.support);
    assert!(max_abs_diff(&scaled.b_hat, &(&base.b_hat * 2.0)) < 1e-8);
}

#[test]
fn warm_start_reaches_the_same_point() {
    let (x, y) = instance(4, 40, 12, 2);
    let amax = alpha_max(&x, &y, 1.0).unwrap();
    let pen = PenaltyPair::new(0.2 * amax, 0.1).unwrap();
    let cold = fit(&x, &y, pen, &tight(1e-13)).unwrap();
    let start = fit(&x, &y, PenaltyPair::new(0.5 * amax, 0.1).unwrap(), &tight(1e-13)).unwrap();
    let opts = FitOptions { b_init: Some(start.b_hat), ..tight(1e-13) };
    let warm = fit(&x, &y, pen, &opts).unwrap();
    assert!(max_abs_diff(&cold.b_hat, &warm.b_hat) < 1e-9);
}

#[test]
fn duplicated_column_with_ridge_splits_evenly() {
    let mut r = rng(9);
    let base = gaussian(&mut r, 30, 4);
    let x = Mat::from_fn(30, 5, |i, j| base[(i, if j == 4 { 0 } else { j })]);
    let y = gaussian(&mut r, 30, 2) + base.columns(0, 1) * Mat::from_row_slice(1, 2, &[2.0, -1.0]);
    let res = fit(&x, &y, PenaltyPair::new(0.05, 0.1).unwrap(), &tight(1e-13)).unwrap();
    assert!(max_abs_diff(&res.b_hat.rows(0, 1).into_owned(), &res.b_hat.rows(4, 1).into_owned()) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweeps_never_increase_the_objective(seed in 0u64..1000, frac in 0.01f64..0.9, tau in 0.0f64..0.5) {
        let (x, y) = instance(seed, 25, 12, 3);
        let lambda = frac * alpha_max(&x, &y, 1.0).unwrap();
        let pen = PenaltyPair::new(lambda, tau).unwrap();
        let res = fit(&x, &y, pen, &FitOptions::default()).unwrap();
        for w in res.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        let last = *res.objective_trace.last().unwrap();
        prop_assert!((last - objective(&x, &y, &res.b_hat, &pen)).abs() <= 1e-12 * last.max(1.0));
    }

    #[test]
    fn converged_fits_carry_a_kkt_certificate(seed in 0u64..1000, frac in 0.02f64..0.9, tau in 0.0f64..0.5) {
        let (x, y) = instance(seed, 30, 10, 2);
        let lambda = frac * alpha_max(&x, &y, 1.0).unwrap();
        let opts = FitOptions::default();
        let res = fit(&x, &y, PenaltyPair::new(lambda, tau).unwrap(), &opts).unwrap();
        prop_assert!(res.converged);
        prop_assert!(kkt_violation(&x, &y, &res) <= 100.0 * opts.tol);
    }

    #[test]
    fn support_and_residual_are_exact(seed in 0u64..1000, frac in 0.05f64..1.2) {
        let (x, y) = instance(seed, 20, 15, 3);
        let lambda = frac * alpha_max(&x, &y, 1.0).unwrap();
        let res = fit(&x, &y, PenaltyPair::new(lambda, 0.0).unwrap(), &FitOptions::default()).unwrap();
        prop_assert_eq!(&res.support, &row_support(&res.b_hat));
        for j in 0..15 {
            if !res.support.contains(&j) {
                prop_assert!(res.b_hat.row(j).iter().all(|&v| v == 0.0));
            }
        }
        let expect = &y - &x * &res.b_hat;
        prop_assert!(max_abs_diff(&res.residual, &expect) <= 1e-12 * (1.0 + y.amax()));
    }
}
