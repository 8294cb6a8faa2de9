mod common;

use common::{newton_ridge, random_dataset};
use ppi_core::cv::{cv_grid, cv_lambda, CvOptions};
use ppi_core::design::encode_design;
use ppi_core::solver::{
    self, fit, fit_path, kkt_residual, lambda_max, objective, objective_at, SolverOptions,
};
use proptest::prelude::*;

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        kkt_tol: 1e-10,
        ..SolverOptions::default()
    }
}

#[test]
fn unpenalized_fit_matches_newton() {
    for seed in 0..5 {
        let ds = random_dataset(seed, 200, 3, &[4, 4, 4]);
        let design = encode_design(&ds, None).unwrap();
        assert_eq!(design.n_cols(), 12);
        let oracle = newton_ridge(&design, 0.0);
        let f = fit(&design, 0.0, 1.0, None, &tight()).unwrap();
        assert!(f.converged);
        for (a, b) in f.coefs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
        assert_eq!(f.intercept, 0.0);
    }
}

#[test]
fn ridge_fit_matches_newton() {
    let ds = random_dataset(11, 200, 3, &[4, 4, 4]);
    let design = encode_design(&ds, None).unwrap();
    for lam in [1e-3, 1e-2, 0.1] {
        let oracle = newton_ridge(&design, lam);
        let f = fit(&design, lam, 0.0, None, &tight()).unwrap();
        for (a, b) in f.coefs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "lambda {lam}: {a} vs {b}");
        }
    }
}

#[test]
fn above_lambda_max_everything_penalized_is_zero() {
    let ds = random_dataset(3, 300, 2, &[3, 5, 2, 4]);
    let design = encode_design(&ds, None).unwrap();
    for alpha in [0.1, 0.5, 1.0] {
        let lmax = lambda_max(&design, alpha).unwrap();
        for lam in [lmax, lmax * 3.0] {
            let f = fit(&design, lam, alpha, None, &tight()).unwrap();
            assert!(f.converged);
            for j in 0..design.n_cols() {
                if design.is_penalized(j) {
                    assert_eq!(f.coefs[j], 0.0);
                }
            }
        }
        let f = fit(&design, lmax * (1.0 + 1e-9), alpha, None, &tight()).unwrap();
        // region coefficients are the per-region weighted log-odds
        for r in 0..design.n_regions() {
            let rows = design.column_rows(r);
            let (num, den) = rows.iter().fold((0.0, 0.0), |(a, b), &i| {
                let i = i as usize;
                (
                    a + design.weights()[i] * design.labels()[i],
                    b + design.weights()[i],
                )
            });
            let p = num / den;
            assert!((f.coefs[r] - (p / (1.0 - p)).ln()).abs() < 1e-8);
        }
        let below = fit(&design, lmax * 0.98, alpha, None, &tight()).unwrap();
        assert!((0..design.n_cols()).any(|j| design.is_penalized(j) && below.coefs[j] != 0.0));
    }
}

#[test]
fn path_objective_is_monotone_against_warm_start() {
    let ds = random_dataset(5, 400, 3, &[3, 3, 4, 5, 2]);
    let design = encode_design(&ds, None).unwrap();
    let path = fit_path(&design, 0.7, 40, 1e-3, &SolverOptions::default()).unwrap();
    for k in 1..path.fits.len() {
        let prev = &path.fits[k - 1];
        let here = &path.fits[k];
        let at_prev = objective_at(
            &design,
            prev.intercept,
            &prev.coefs,
            here.lambda,
            here.alpha,
        );
        assert!(
            objective(here, &design).unwrap() <= at_prev + 1e-10,
            "step {k}"
        );
    }
}

#[test]
fn loo_cross_validation_matches_brute_force() {
    let mut ds = random_dataset(8, 12, 2, &[3, 3]);
    for (i, r) in ds.records.iter_mut().enumerate() {
        r.poverty = (i % 2) as u8;
    }
    let design = encode_design(&ds, None).unwrap();
    let opts = CvOptions {
        n_lambda: 15,
        lambda_min_ratio: Some(1e-2),
        early_stop: None,
        solver: SolverOptions::default(),
    };
    let alpha = 0.5;
    let curve = cv_lambda(&design, alpha, 12, 1, &opts).unwrap();
    let grid = cv_grid(&design, alpha, &opts).unwrap();
    assert_eq!(curve.lambdas, grid);
    let n = design.n_rows();
    let w = design.weights();
    let y = design.labels();
    let mut brute = vec![0.0; grid.len()];
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let train = design.select_rows(&others);
        let path = solver::fit_path_on_grid(&train, alpha, &grid, &opts.solver).unwrap();
        for (l, f) in path.fits.iter().enumerate() {
            let eta = f.linear_predictor_row(&design, i);
            brute[l] += w[i] * -2.0 * solver::loglik(eta, y[i]);
        }
    }
    let total: f64 = w.iter().sum();
    for (l, b) in brute.iter().enumerate() {
        assert!(
            (curve.mean_deviance[l] - b / total).abs() < 1e-9,
            "lambda index {l}"
        );
    }
}

#[test]
fn single_class_labels_are_rejected() {
    let mut ds = random_dataset(2, 50, 2, &[3]);
    for r in &mut ds.records {
        r.poverty = 1;
    }
    let design = encode_design(&ds, None).unwrap();
    assert!(fit(&design, 0.01, 1.0, None, &SolverOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_holds_at_every_returned_fit(seed in 0u64..10_000, alpha in 0.05f64..=1.0, frac in 1e-3f64..1.0) {
        let ds = random_dataset(seed, 200, 3, &[4, 3, 5]);
        let design = encode_design(&ds, None).unwrap();
        let lmax = lambda_max(&design, alpha).unwrap();
        let f = fit(&design, lmax * frac, alpha, None, &SolverOptions::default()).unwrap();
        prop_assert!(f.converged);
        prop_assert!(kkt_residual(&f, &design) <= 1e-6);
    }

    #[test]
    fn warm_and_cold_starts_agree(seed in 0u64..10_000, alpha in 0.05f64..=1.0, frac in 1e-2f64..0.5) {
        let ds = random_dataset(seed, 200, 2, &[4, 4]);
        let design = encode_design(&ds, None).unwrap();
        let lmax = lambda_max(&design, alpha).unwrap();
        let warm = fit(&design, lmax * frac * 1.5, alpha, None, &tight()).unwrap();
        let a = fit(&design, lmax * frac, alpha, Some(&warm), &tight()).unwrap();
        let b = fit(&design, lmax * frac, alpha, None, &tight()).unwrap();
        let oa = objective(&a, &design).unwrap();
        let ob = objective(&b, &design).unwrap();
        prop_assert!((oa - ob).abs() < 1e-9);
    }
}
