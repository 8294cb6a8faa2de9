#![allow(dead_code)]

use ppi_core::data::{HouseholdRecord, QuestionSpec, SurveyDataset};
use ppi_core::design::DesignMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

/// Small random survey: `regions` regions, questions with the given level
/// counts, lognormal weights, labels from a logistic model with moderate
/// effects so that no cell separates.
pub fn random_dataset(seed: u64, n: usize, regions: usize, levels: &[usize]) -> SurveyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = LogNormal::new(0.0, 0.5).unwrap();
    let effects: Vec<Vec<f64>> = levels
        .iter()
        .map(|&k| {
            (0..k)
                .map(|l| {
                    if l == 0 {
                        0.0
                    } else {
                        rng.random_range(-0.8..0.8)
                    }
                })
                .collect()
        })
        .collect();
    let region_fx: Vec<f64> = (0..regions).map(|_| rng.random_range(-0.5..0.5)).collect();
    let records = (0..n)
        .map(|i| {
            let region = rng.random_range(0..regions);
            let responses: Vec<u16> = levels
                .iter()
                .map(|&k| rng.random_range(0..k) as u16)
                .collect();
            let eta = region_fx[region]
                + responses
                    .iter()
                    .zip(&effects)
                    .map(|(&l, fx)| fx[l as usize])
                    .sum::<f64>();
            let p = 1.0 / (1.0 + (-eta).exp());
            HouseholdRecord {
                id: format!("h{i:04}"),
                weight: lognormal.sample(&mut rng),
                region,
                poverty: u8::from(rng.random::<f64>() < p),
                responses,
                consumption: Some(1000.0 * (-eta).exp() * lognormal.sample(&mut rng)),
                urban: Some(rng.random::<f64>() < 0.4),
            }
        })
        .collect();
    SurveyDataset::new(
        records,
        (0..regions).map(|r| format!("R{r}")).collect(),
        levels
            .iter()
            .enumerate()
            .map(|(q, &k)| {
                QuestionSpec::new(
                    format!("q{q}"),
                    "",
                    (0..k).map(|l| format!("L{l}")).collect(),
                )
                .unwrap()
            })
            .collect(),
        "test line",
    )
    .unwrap()
}

/// Dense copy of the design for oracle computations.
pub fn dense(design: &DesignMatrix) -> Vec<Vec<f64>> {
    (0..design.n_rows())
        .map(|i| (0..design.n_cols()).map(|j| design.value(i, j)).collect())
        .collect()
}

/// Weighted logistic regression with a pure ridge penalty `λ Σ pf_j β_j²`
/// by plain Newton–Raphson on the dense design, in nalgebra. No intercept:
/// the region columns span it.
pub fn newton_ridge(design: &DesignMatrix, lambda: f64) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let x = dense(design);
    let n = x.len();
    let p = x[0].len();
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let w = DVector::from_column_slice(design.weights());
    let y = DVector::from_column_slice(design.labels());
    let pf = DVector::from_column_slice(design.penalty_factors());
    let mut beta = DVector::zeros(p);
    for _ in 0..200 {
        let eta = &xm * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = xm.transpose() * w.component_mul(&(&y - &mu)) / n as f64
            - pf.component_mul(&beta) * (2.0 * lambda);
        let d = DVector::from_fn(n, |i, _| w[i] * mu[i] * (1.0 - mu[i]) / n as f64);
        let h = xm.transpose() * DMatrix::from_diagonal(&d) * &xm
            + DMatrix::from_diagonal(&(&pf * (2.0 * lambda)));
        let step = h
            .cholesky()
            .expect("Hessian is positive definite")
            .solve(&grad);
        beta += &step;
        if step.amax() < 1e-14 {
            break;
        }
    }
    beta.iter().copied().collect()
}
