//! Fold construction and inner cross-validation over the penalty strength.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::design::{encode_design, DesignMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::selection::{
    select_top_questions, selection_frequencies, SelectedQuestionSet, SelectionConfig,
    SelectionFrequencyTable,
};
use crate::solver::{self, default_lambda_min_ratio, lambda_grid, ElasticNetFit, SolverOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n: usize,
    pub k: usize,
    pub assignment: Vec<usize>,
}

/// Uniformly random balanced partition of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::Validation(format!(
            "need 2 <= k <= n for cross-validation, got k={k}, n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, "folds", 0));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldAssignment { n, k, assignment })
}

impl FoldAssignment {
    /// (training rows, held-out rows) for fold `f`.
    pub fn partition(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n).partition(|&i| self.assignment[i] != f)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaRule {
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "1se")]
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub n_lambda: usize,
    /// Defaults to 1e-4 when rows outnumber columns, else 1e-3.
    pub lambda_min_ratio: Option<f64>,
    /// Stop walking down the grid once the mean held-out deviance has not
    /// improved for this many consecutive λ values.
    pub early_stop: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            n_lambda: 100,
            lambda_min_ratio: None,
            early_stop: Some(10),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub alpha: f64,
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub mean_deviance: Vec<f64>,
    pub se_deviance: Vec<f64>,
    /// `fold_deviance[f][l]`: held-out deviance of fold `f` at `lambdas[l]`.
    pub fold_deviance: Vec<Vec<f64>>,
    pub index_min: usize,
    pub index_1se: usize,
    pub lambda_min: f64,
    pub lambda_1se: f64,
}

impl CvCurve {
    pub fn index_for(&self, rule: LambdaRule) -> usize {
        match rule {
            LambdaRule::Min => self.index_min,
            LambdaRule::OneSe => self.index_1se,
        }
    }
}

/// Weighted held-out deviance of `fit` on rows of the parent `design`.
pub fn held_out_deviance(design: &DesignMatrix, fit: &ElasticNetFit, rows: &[usize]) -> f64 {
    let w = design.weights();
    let y = design.labels();
    solver::weighted_deviance(
        rows.iter()
            .map(|&i| (fit.linear_predictor_row(design, i), y[i], w[i])),
    )
}

struct FoldState {
    train: DesignMatrix,
    test_rows: Vec<usize>,
    test_weight: f64,
    last: Option<ElasticNetFit>,
    deviance: Vec<f64>,
}

fn draw_valid_folds(design: &DesignMatrix, k: usize, seed: u64) -> Result<FoldAssignment> {
    let y = design.labels();
    for attempt in 0..10u64 {
        let folds = make_folds(design.n_rows(), k, derive_seed(seed, "fold-draw", attempt))?;
        let ok = (0..k).all(|f| {
            let poor = (0..design.n_rows())
                .filter(|&i| folds.assignment[i] != f && y[i] > 0.5)
                .count();
            let total = folds.n - folds.sizes()[f];
            poor > 0 && poor < total
        });
        if ok {
            return Ok(folds);
        }
    }
    Err(Error::Numerical(
        "could not draw folds with both classes in every training fold after 10 attempts".into(),
    ))
}

/// The λ grid shared by all folds, derived from the full design.
pub fn cv_grid(design: &DesignMatrix, alpha: f64, opts: &CvOptions) -> Result<Vec<f64>> {
    let lmax = solver::lambda_max(design, alpha)?;
    if lmax <= 0.0 {
        return Err(Error::Numerical(
            "lambda_max is zero: the region-only model is optimal for every lambda".into(),
        ));
    }
    let ratio = opts
        .lambda_min_ratio
        .unwrap_or_else(|| default_lambda_min_ratio(design));
    if opts.n_lambda < 2 {
        return Err(Error::Validation("n_lambda must be >= 2".into()));
    }
    Ok(lambda_grid(lmax, opts.n_lambda, ratio))
}

/// K-fold cross-validation of the held-out weighted binomial deviance over a
/// λ grid shared by every fold.
pub fn cv_lambda(
    design: &DesignMatrix,
    alpha: f64,
    k: usize,
    seed: u64,
    opts: &CvOptions,
) -> Result<CvCurve> {
    let grid = cv_grid(design, alpha, opts)?;
    let folds = draw_valid_folds(design, k, seed)?;
    let w = design.weights();
    let mut states: Vec<FoldState> = (0..k)
        .map(|f| {
            let (train, test) = folds.partition(f);
            FoldState {
                train: design.select_rows(&train),
                test_weight: test.iter().map(|&i| w[i]).sum(),
                test_rows: test,
                last: None,
                deviance: Vec::with_capacity(grid.len()),
            }
        })
        .collect();
    let total_weight: f64 = states.iter().map(|s| s.test_weight).sum();

    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    let mut best = 0;
    for (l, &lam) in grid.iter().enumerate() {
        states.par_iter_mut().try_for_each(|s| -> Result<()> {
            let f = solver::fit(&s.train, lam, alpha, s.last.as_ref(), &opts.solver)?;
            s.deviance.push(held_out_deviance(design, &f, &s.test_rows));
            s.last = Some(f);
            Ok(())
        })?;
        let m = states
            .iter()
            .map(|s| s.test_weight * s.deviance[l])
            .sum::<f64>()
            / total_weight;
        let var = states
            .iter()
            .map(|s| s.test_weight * (s.deviance[l] - m).powi(2))
            .sum::<f64>()
            / total_weight
            / (k - 1) as f64;
        mean.push(m);
        se.push(var.sqrt());
        if m < mean[best] {
            best = l;
        }
        if let Some(patience) = opts.early_stop {
            if l - best >= patience {
                break;
            }
        }
    }
    let threshold = mean[best] + se[best];
    let index_1se = mean.iter().position(|&m| m <= threshold).unwrap_or(best);
    let len = mean.len();
    Ok(CvCurve {
        alpha,
        k,
        lambdas: grid[..len].to_vec(),
        mean_deviance: mean,
        se_deviance: se,
        fold_deviance: states.into_iter().map(|s| s.deviance).collect(),
        index_min: best,
        index_1se,
        lambda_min: grid[best],
        lambda_1se: grid[index_1se],
    })
}

/// Cross-validates λ, then refits the full design along the same grid down
/// to the λ picked by `rule`.
pub fn fit_at_cv_lambda(
    design: &DesignMatrix,
    alpha: f64,
    k: usize,
    seed: u64,
    rule: LambdaRule,
    opts: &CvOptions,
) -> Result<(ElasticNetFit, CvCurve)> {
    let curve = cv_lambda(design, alpha, k, seed, opts)?;
    let idx = curve.index_for(rule);
    let path = solver::fit_path_on_grid(design, alpha, &curve.lambdas[..=idx], &opts.solver)?;
    let fit = path.fits.into_iter().last().expect("grid is nonempty");
    Ok((fit, curve))
}

/// Question selection followed by the final fit at `lambda_min`, as run on
/// one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectAndFit {
    pub table: SelectionFrequencyTable,
    pub selected: SelectedQuestionSet,
    pub fit: ElasticNetFit,
    pub curve: CvCurve,
}

/// Runs selection at `alpha`, then fits the chosen questions with λ chosen by
/// inner CV at the minimum rule.
pub fn select_and_fit(
    train: &SurveyDataset,
    alpha: f64,
    config: &SelectionConfig,
    seed: u64,
) -> Result<SelectAndFit> {
    let table = selection_frequencies(train, alpha, config)?;
    let selected = select_top_questions(&table, config.k_questions)?;
    let design = encode_design(train, Some(&selected.questions))?;
    let (fit, curve) = fit_at_cv_lambda(
        &design,
        alpha,
        config.inner_cv_k,
        seed,
        LambdaRule::Min,
        &config.cv,
    )?;
    Ok(SelectAndFit {
        table,
        selected,
        fit,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub fold_deviance: Vec<f64>,
    pub mean_deviance: f64,
    pub fold_lambda: Vec<f64>,
    pub fold_selected: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCvReport {
    pub k_outer: usize,
    pub seed: u64,
    pub results: Vec<AlphaResult>,
    pub chosen_alpha: f64,
}

/// Lowest mean deviance wins; values within 1e-12 of each other count as
/// tied and the larger α is preferred.
pub fn choose_alpha(candidates: &[(f64, f64)]) -> Option<f64> {
    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    candidates
        .iter()
        .filter(|c| c.1 - best < 1e-12)
        .map(|c| c.0)
        .fold(None, |acc: Option<f64>, a| {
            Some(acc.map_or(a, |b| b.max(a)))
        })
}

/// Outer cross-validation over α. Every outer fold repeats the whole
/// selection-plus-fit procedure on its training part and scores the
/// weighted deviance on its held-out part. All α values see the same folds
/// and the same replicate seeds.
pub fn outer_cv_alpha(
    train: &SurveyDataset,
    alpha_grid: &[f64],
    config: &SelectionConfig,
    k_outer: usize,
    seed: u64,
) -> Result<(f64, AlphaCvReport)> {
    if alpha_grid.is_empty() {
        return Err(Error::Validation("alpha grid is empty".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(0.05..=1.0).contains(*a)) {
        return Err(Error::Validation(format!(
            "alpha {a} lies outside [0.05, 1]"
        )));
    }
    let canonical = train.positions_by_id();
    let folds = make_folds(train.len(), k_outer, derive_seed(seed, "outer-folds", 0))?;
    let parts: Vec<(SurveyDataset, SurveyDataset)> = (0..k_outer)
        .map(|f| {
            let (tr, te) = folds.partition(f);
            let pick = |v: Vec<usize>| {
                train.subset(&v.into_iter().map(|i| canonical[i]).collect::<Vec<_>>())
            };
            (pick(tr), pick(te))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..alpha_grid.len())
        .flat_map(|a| (0..k_outer).map(move |f| (a, f)))
        .collect();
    let outcomes: Vec<(f64, f64, Vec<String>)> = jobs
        .par_iter()
        .map(|&(a, f)| -> Result<(f64, f64, Vec<String>)> {
            let (tr, te) = &parts[f];
            let fold_config = SelectionConfig {
                seed: derive_seed(seed, "outer-selection", f as u64),
                ..config.clone()
            };
            let sf = select_and_fit(
                tr,
                alpha_grid[a],
                &fold_config,
                derive_seed(seed, "outer-final", f as u64),
            )?;
            let etas = (0..te.len())
                .map(|i| sf.fit.linear_predictor(&te.profile(i)))
                .collect::<Result<Vec<_>>>()?;
            let dev = solver::weighted_deviance(
                te.records
                    .iter()
                    .zip(&etas)
                    .map(|(r, &e)| (e, r.poverty as f64, r.weight)),
            );
            Ok((dev, sf.fit.lambda, sf.selected.questions))
        })
        .collect::<Result<_>>()?;

    let results: Vec<AlphaResult> = alpha_grid
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mine = &outcomes[a * k_outer..(a + 1) * k_outer];
            let fold_deviance: Vec<f64> = mine.iter().map(|o| o.0).collect();
            AlphaResult {
                alpha,
                mean_deviance: fold_deviance.iter().sum::<f64>() / k_outer as f64,
                fold_deviance,
                fold_lambda: mine.iter().map(|o| o.1).collect(),
                fold_selected: mine.iter().map(|o| o.2.clone()).collect(),
            }
        })
        .collect();
    let chosen_alpha = choose_alpha(
        &results
            .iter()
            .map(|r| (r.alpha, r.mean_deviance))
            .collect::<Vec<_>>(),
    )
    .expect("grid is nonempty");
    Ok((
        chosen_alpha,
        AlphaCvReport {
            k_outer,
            seed,
            results,
            chosen_alpha,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_balance() {
        let f = make_folds(10, 5, 3).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let mut s = make_folds(11, 5, 3).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert_eq!(make_folds(11, 5, 3).unwrap(), make_folds(11, 5, 3).unwrap());
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn alpha_ties_go_to_the_larger_value() {
        assert_eq!(choose_alpha(&[(0.5, 0.9), (1.0, 0.9 + 5e-13)]), Some(1.0));
        assert_eq!(choose_alpha(&[(0.5, 0.9), (1.0, 0.9 + 5e-12)]), Some(0.5));
        assert_eq!(choose_alpha(&[(1.0, 0.7)]), Some(1.0));
        assert_eq!(choose_alpha(&[]), None);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let f = make_folds(23, 4, 9).unwrap();
        for k in 0..4 {
            let (tr, te) = f.partition(k);
            assert_eq!(tr.len() + te.len(), 23);
            assert!(te.iter().all(|i| !tr.contains(i)));
        }
    }
}
