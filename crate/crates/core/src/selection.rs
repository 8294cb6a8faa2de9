//! Resampling-frequency question selection.
//!
//! Each replicate draws an m-out-of-n subsample, cross-validates λ for an
//! elastic-net fit over all candidate questions (regions unpenalized), and
//! records which questions keep a nonzero level coefficient. Questions are
//! then ranked by how often they were selected.

use std::cmp::Ordering;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{fit_at_cv_lambda, CvOptions, LambdaRule};
use crate::data::SurveyDataset;
use crate::design::{encode_design, Column, DesignMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::solver::{self, ElasticNetFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    #[serde(default = "default_bootstrap")]
    pub n_bootstrap: usize,
    /// m = ⌈fraction · n⌉
    #[serde(default = "default_fraction")]
    pub subsample_fraction: f64,
    #[serde(default)]
    pub with_replacement: bool,
    #[serde(default = "default_k_questions")]
    pub k_questions: usize,
    #[serde(default = "default_inner_k")]
    pub inner_cv_k: usize,
    #[serde(default = "default_rule")]
    pub lambda_rule: LambdaRule,
    pub seed: u64,
    #[serde(default)]
    pub cv: CvOptions,
    /// Test hook: skip cross-validation and fit every replicate at this
    /// multiple of its own lambda_max.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_lambda_factor: Option<f64>,
}

fn default_bootstrap() -> usize {
    100
}
fn default_fraction() -> f64 {
    0.5
}
fn default_k_questions() -> usize {
    10
}
fn default_inner_k() -> usize {
    10
}
fn default_rule() -> LambdaRule {
    LambdaRule::OneSe
}

impl SelectionConfig {
    pub fn new(seed: u64) -> Self {
        SelectionConfig {
            n_bootstrap: default_bootstrap(),
            subsample_fraction: default_fraction(),
            with_replacement: false,
            k_questions: default_k_questions(),
            inner_cv_k: default_inner_k(),
            lambda_rule: default_rule(),
            seed,
            cv: CvOptions::default(),
            forced_lambda_factor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bootstrap < 1 || self.k_questions < 1 {
            return Err(Error::Validation(
                "selection needs n_bootstrap >= 1 and k_questions >= 1".into(),
            ));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Validation(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }

    pub fn subsample_size(&self, n: usize) -> usize {
        (self.subsample_fraction * n as f64).ceil() as usize
    }
}

/// Draws replicate `replicate_index`. Sampling runs over records sorted by
/// id, so the draw does not depend on file row order.
pub fn draw_subsample(
    dataset: &SurveyDataset,
    config: &SelectionConfig,
    replicate_index: usize,
) -> Result<SurveyDataset> {
    let n = dataset.len();
    let m = config.subsample_size(n);
    if m < 30 {
        return Err(Error::Validation(format!(
            "subsample size {m} is below the minimum of 30"
        )));
    }
    let canonical = dataset.positions_by_id();
    let base = derive_seed(config.seed, "subsample", replicate_index as u64);
    for attempt in 0..10u64 {
        let mut rng = seeded_rng(base, "attempt", attempt);
        let picks: Vec<usize> = if config.with_replacement {
            (0..m).map(|_| canonical[rng.random_range(0..n)]).collect()
        } else {
            let mut c = canonical.clone();
            c.partial_shuffle(&mut rng, m);
            c.truncate(m);
            c
        };
        let sub = dataset.subset(&picks);
        if sub.has_both_classes() {
            return Ok(sub);
        }
    }
    Err(Error::Numerical(format!(
        "replicate {replicate_index}: every draw had a single poverty class"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub lambda: f64,
    pub active: Vec<String>,
    /// Largest |coefficient| × column sd over each active question's levels.
    pub magnitudes: Vec<f64>,
}

fn standardized_magnitudes(
    fit: &ElasticNetFit,
    design: &DesignMatrix,
    questions: &[String],
) -> Vec<f64> {
    let sd = design.column_sd();
    questions
        .iter()
        .map(|q| {
            fit.columns
                .iter()
                .enumerate()
                .filter(|(_, c)| matches!(c, Column::Level { question, .. } if question == q))
                .map(|(j, _)| (fit.coefs[j] * sd[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Active question set of one replicate at the cross-validated λ.
pub fn replicate_active_set(
    subsample: &SurveyDataset,
    alpha: f64,
    config: &SelectionConfig,
    replicate_index: usize,
) -> Result<ReplicateOutcome> {
    let design = encode_design(subsample, None)?;
    let fit = match config.forced_lambda_factor {
        Some(factor) => {
            let lam = factor * solver::lambda_max(&design, alpha)?;
            solver::fit(&design, lam, alpha, None, &config.cv.solver)?
        }
        None => {
            let seed = derive_seed(config.seed, "replicate-cv", replicate_index as u64);
            fit_at_cv_lambda(
                &design,
                alpha,
                config.inner_cv_k,
                seed,
                config.lambda_rule,
                &config.cv,
            )?
            .0
        }
    };
    let active = fit.active_questions();
    let magnitudes = standardized_magnitudes(&fit, &design, &active);
    Ok(ReplicateOutcome {
        lambda: fit.lambda,
        active,
        magnitudes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub active: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionFrequency {
    pub id: String,
    pub selected_count: usize,
    /// Mean standardized magnitude over replicates where the question was active.
    pub mean_abs_std_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFrequencyTable {
    pub alpha: f64,
    pub n_bootstrap: usize,
    pub n_failed: usize,
    pub questions: Vec<QuestionFrequency>,
    pub replicates: Vec<ReplicateRecord>,
}

impl SelectionFrequencyTable {
    pub fn count(&self, id: &str) -> Option<usize> {
        self.questions
            .iter()
            .find(|q| q.id == id)
            .map(|q| q.selected_count)
    }
}

/// Runs every replicate (in parallel, reproducibly by index) and counts how
/// often each question is active.
pub fn selection_frequencies(
    dataset: &SurveyDataset,
    alpha: f64,
    config: &SelectionConfig,
) -> Result<SelectionFrequencyTable> {
    config.validate()?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..config.n_bootstrap)
        .into_par_iter()
        .map(|b| {
            let sub = draw_subsample(dataset, config, b)?;
            replicate_active_set(&sub, alpha, config, b)
        })
        .collect();
    tabulate(dataset, alpha, config.n_bootstrap, outcomes)
}

fn tabulate(
    dataset: &SurveyDataset,
    alpha: f64,
    n_bootstrap: usize,
    outcomes: Vec<Result<ReplicateOutcome>>,
) -> Result<SelectionFrequencyTable> {
    let nq = dataset.questions.len();
    let mut counts = vec![0usize; nq];
    let mut magnitude_sums = vec![0.0; nq];
    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(out) => {
                for (q, m) in out.active.iter().zip(&out.magnitudes) {
                    let qi = dataset
                        .question_index(q)
                        .expect("active question comes from dataset");
                    counts[qi] += 1;
                    magnitude_sums[qi] += m;
                }
                replicates.push(ReplicateRecord {
                    index,
                    lambda: Some(out.lambda),
                    active: out.active,
                    error: None,
                });
            }
            Err(e) => {
                failures.push(format!("replicate {index}: {e}"));
                replicates.push(ReplicateRecord {
                    index,
                    lambda: None,
                    active: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if failures.len() * 5 > n_bootstrap {
        return Err(Error::Numerical(format!(
            "{} of {} selection replicates failed: {}",
            failures.len(),
            n_bootstrap,
            failures.join("; ")
        )));
    }
    for f in &failures {
        warn!("{f}");
    }
    Ok(SelectionFrequencyTable {
        alpha,
        n_bootstrap,
        n_failed: failures.len(),
        questions: dataset
            .questions
            .iter()
            .enumerate()
            .map(|(qi, q)| QuestionFrequency {
                id: q.id.clone(),
                selected_count: counts[qi],
                mean_abs_std_coef: if counts[qi] > 0 {
                    magnitude_sums[qi] / counts[qi] as f64
                } else {
                    0.0
                },
            })
            .collect(),
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedQuestionSet {
    /// Ordered by descending selection frequency.
    pub questions: Vec<String>,
    pub counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_note: Option<String>,
    /// Set when fewer than k questions were ever selected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill_note: Option<String>,
}

fn rank_order(a: &QuestionFrequency, b: &QuestionFrequency) -> Ordering {
    b.selected_count
        .cmp(&a.selected_count)
        .then(
            b.mean_abs_std_coef
                .partial_cmp(&a.mean_abs_std_coef)
                .unwrap_or(Ordering::Equal),
        )
        .then(a.id.cmp(&b.id))
}

/// Top-k questions by selection count. Ties at the cut go to the larger
/// mean standardized magnitude, then to the smaller id.
pub fn select_top_questions(
    table: &SelectionFrequencyTable,
    k: usize,
) -> Result<SelectedQuestionSet> {
    if table.questions.is_empty() {
        return Err(Error::Validation("selection table is empty".into()));
    }
    if k == 0 || k > table.questions.len() {
        return Err(Error::Validation(format!(
            "cannot select {k} of {} questions",
            table.questions.len()
        )));
    }
    let mut ranked: Vec<&QuestionFrequency> = table.questions.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));

    let cut = ranked[k - 1].selected_count;
    let tied: Vec<&str> = ranked
        .iter()
        .filter(|q| q.selected_count == cut)
        .map(|q| q.id.as_str())
        .collect();
    let tied_inside = ranked[..k]
        .iter()
        .filter(|q| q.selected_count == cut)
        .count();
    let tie_note = (tied.len() > tied_inside).then(|| {
        format!(
            "{} questions tied at count {cut} for the last {tied_inside} place(s): {}; kept {}",
            tied.len(),
            tied.join(", "),
            ranked[k - tied_inside..k]
                .iter()
                .map(|q| q.id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )
    });
    let nonzero = ranked.iter().filter(|q| q.selected_count > 0).count();
    let fill_note = (nonzero < k).then(|| {
        let msg = format!(
            "only {nonzero} question(s) were ever selected; {} filled by tie-break among never-selected questions",
            k - nonzero
        );
        warn!("{msg}");
        msg
    });
    Ok(SelectedQuestionSet {
        questions: ranked[..k].iter().map(|q| q.id.clone()).collect(),
        counts: ranked[..k].iter().map(|q| q.selected_count).collect(),
        tie_note,
        fill_note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(counts: &[(&str, usize, f64)]) -> SelectionFrequencyTable {
        SelectionFrequencyTable {
            alpha: 1.0,
            n_bootstrap: 50,
            n_failed: 0,
            questions: counts
                .iter()
                .map(|&(id, c, m)| QuestionFrequency {
                    id: id.into(),
                    selected_count: c,
                    mean_abs_std_coef: m,
                })
                .collect(),
            replicates: vec![],
        }
    }

    #[test]
    fn strict_ordering() {
        let t = table(&[("q1", 50, 0.1), ("q2", 40, 0.1), ("q3", 10, 0.9)]);
        let s = select_top_questions(&t, 2).unwrap();
        assert_eq!(s.questions, vec!["q1", "q2"]);
        assert!(s.tie_note.is_none());
    }

    #[test]
    fn boundary_tie_is_deterministic_and_recorded() {
        let t = table(&[
            ("a", 30, 0.2),
            ("b", 20, 0.1),
            ("c", 20, 0.3),
            ("d", 20, 0.3),
        ]);
        let s = select_top_questions(&t, 2).unwrap();
        assert_eq!(s.questions, vec!["a", "c"]);
        let note = s.tie_note.unwrap();
        assert!(note.contains("b") && note.contains("d"));
    }

    #[test]
    fn zero_count_fill_is_flagged() {
        let t = table(&[("a", 3, 0.2), ("b", 0, 0.0), ("c", 0, 0.0)]);
        let s = select_top_questions(&t, 2).unwrap();
        assert_eq!(s.questions, vec!["a", "b"]);
        assert!(s.fill_note.is_some());
        assert!(select_top_questions(&t, 4).is_err());
    }
}
