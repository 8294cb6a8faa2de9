//! Dummy-coded design matrices.
//!
//! Columns are laid out as one indicator per region followed by one
//! indicator per non-reference level of each included question. All
//! entries are 0/1, so the matrix is stored as index lists in both row and
//! column orientation.

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Region { region: String },
    Level { question: String, level: String },
}

/// A question as it appears in the design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedQuestion {
    pub id: String,
    pub reference_level: String,
    pub columns: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    columns: Vec<Column>,
    penalty_factors: Vec<f64>,
    n_regions: usize,
    questions: Vec<EncodedQuestion>,
    row_cols: Vec<Vec<u32>>,
    col_rows: Vec<Vec<u32>>,
    weights: Vec<f64>,
    labels: Vec<f64>,
    row_ids: Vec<String>,
    warnings: Vec<String>,
}

fn normalize(weights: &mut [f64]) {
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    for w in weights.iter_mut() {
        *w /= mean;
    }
}

/// Dummy-codes `dataset`. With `question_subset = None` every question is
/// included; otherwise only the named ones, in dataset order.
///
/// A question whose responses take a single observed level carries no
/// information and is dropped with a warning.
pub fn encode_design(
    dataset: &SurveyDataset,
    question_subset: Option<&[String]>,
) -> Result<DesignMatrix> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot encode an empty dataset".into()));
    }
    let included: Vec<usize> = match question_subset {
        None => (0..dataset.questions.len()).collect(),
        Some(ids) => {
            if ids.is_empty() {
                return Err(Error::Validation("question subset is empty".into()));
            }
            let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
            for id in &wanted {
                if dataset.question_index(id).is_none() {
                    return Err(Error::Validation(format!(
                        "unknown question `{id}` in subset"
                    )));
                }
            }
            (0..dataset.questions.len())
                .filter(|&q| wanted.contains(dataset.questions[q].id.as_str()))
                .collect()
        }
    };

    let n_regions = dataset.regions.len();
    let mut columns: Vec<Column> = dataset
        .regions
        .iter()
        .map(|r| Column::Region { region: r.clone() })
        .collect();
    let mut penalty_factors = vec![0.0; n_regions];
    let mut questions = Vec::new();
    let mut warnings = Vec::new();
    // (dataset question index, first column) for each kept question
    let mut kept: Vec<(usize, usize)> = Vec::new();

    for &q in &included {
        let spec = &dataset.questions[q];
        let observed: HashSet<u16> = dataset.records.iter().map(|r| r.responses[q]).collect();
        if observed.len() < 2 {
            warnings.push(format!(
                "question `{}` has a single observed level and was dropped",
                spec.id
            ));
            continue;
        }
        let start = columns.len();
        for level in &spec.levels[1..] {
            columns.push(Column::Level {
                question: spec.id.clone(),
                level: level.clone(),
            });
            penalty_factors.push(1.0);
        }
        questions.push(EncodedQuestion {
            id: spec.id.clone(),
            reference_level: spec.levels[0].clone(),
            columns: start..columns.len(),
        });
        kept.push((q, start));
    }
    if questions.is_empty() {
        return Err(Error::Validation(
            "no question with at least two observed levels remains".into(),
        ));
    }

    let n = dataset.len();
    let mut row_cols = Vec::with_capacity(n);
    let mut col_rows = vec![Vec::new(); columns.len()];
    for (i, rec) in dataset.records.iter().enumerate() {
        let mut cols = Vec::with_capacity(1 + kept.len());
        cols.push(rec.region as u32);
        for &(q, start) in &kept {
            let lvl = rec.responses[q] as usize;
            if lvl > 0 {
                cols.push((start + lvl - 1) as u32);
            }
        }
        for &c in &cols {
            col_rows[c as usize].push(i as u32);
        }
        row_cols.push(cols);
    }
    let mut weights: Vec<f64> = dataset.records.iter().map(|r| r.weight).collect();
    normalize(&mut weights);

    Ok(DesignMatrix {
        columns,
        penalty_factors,
        n_regions,
        questions,
        row_cols,
        col_rows,
        weights,
        labels: dataset.records.iter().map(|r| r.poverty as f64).collect(),
        row_ids: dataset.records.iter().map(|r| r.id.clone()).collect(),
        warnings,
    })
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_cols.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn penalty_factors(&self) -> &[f64] {
        &self.penalty_factors
    }

    pub fn questions(&self) -> &[EncodedQuestion] {
        &self.questions
    }

    /// Sorted column indices equal to 1 in row `i`; the first is its region.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.row_cols[i]
    }

    /// Row indices equal to 1 in column `j`.
    pub fn column_rows(&self, j: usize) -> &[u32] {
        &self.col_rows[j]
    }

    /// Σ over rows of column `j` of `a[i] * b[i]`.
    pub fn column_dot(&self, j: usize, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n_rows();
        assert!(a.len() == n && b.len() == n);
        let mut s = 0.0;
        for &i in &self.col_rows[j] {
            // SAFETY: every stored row index is < n_rows by construction
            unsafe {
                s += a.get_unchecked(i as usize) * b.get_unchecked(i as usize);
            }
        }
        s
    }

    /// Σ over rows of column `j` of `a[i]`.
    pub fn column_sum(&self, j: usize, a: &[f64]) -> f64 {
        assert!(a.len() == self.n_rows());
        let mut s = 0.0;
        for &i in &self.col_rows[j] {
            // SAFETY: as in `column_dot`
            unsafe {
                s += a.get_unchecked(i as usize);
            }
        }
        s
    }

    /// Adds `delta` to `a[i]` for every row of column `j`.
    pub fn column_add(&self, j: usize, a: &mut [f64], delta: f64) {
        assert!(a.len() == self.n_rows());
        for &i in &self.col_rows[j] {
            // SAFETY: as in `column_dot`
            unsafe {
                *a.get_unchecked_mut(i as usize) += delta;
            }
        }
    }

    /// Σ over the row's columns of `coefs[j]`.
    pub fn row_sum(&self, i: usize, coefs: &[f64]) -> f64 {
        assert!(coefs.len() == self.n_cols());
        let mut s = 0.0;
        for &j in &self.row_cols[i] {
            // SAFETY: every stored column index is < n_cols by construction
            unsafe {
                s += coefs.get_unchecked(j as usize);
            }
        }
        s
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn region_of_row(&self, i: usize) -> usize {
        self.row_cols[i][0] as usize
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        self.penalty_factors[j] > 0.0
    }

    /// Dense 0/1 value at (i, j).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.row_cols[i].binary_search(&(j as u32)).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn linear_predictor(&self, i: usize, intercept: f64, coefs: &[f64]) -> f64 {
        intercept + self.row_sum(i, coefs)
    }

    /// Weighted standard deviation of every column under the design weights.
    pub fn column_sd(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        self.col_rows
            .iter()
            .map(|rows| {
                let mean = rows.iter().map(|&i| self.weights[i as usize]).sum::<f64>() / n;
                (mean * (1.0 - mean)).max(0.0).sqrt()
            })
            .collect()
    }

    /// Restricts to the given rows (duplicates allowed) and renormalizes the
    /// weights to mean one.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut col_rows = vec![Vec::new(); self.n_cols()];
        let mut row_cols = Vec::with_capacity(rows.len());
        for (new_i, &i) in rows.iter().enumerate() {
            let cols = self.row_cols[i].clone();
            for &c in &cols {
                col_rows[c as usize].push(new_i as u32);
            }
            row_cols.push(cols);
        }
        let mut weights: Vec<f64> = rows.iter().map(|&i| self.weights[i]).collect();
        normalize(&mut weights);
        DesignMatrix {
            columns: self.columns.clone(),
            penalty_factors: self.penalty_factors.clone(),
            n_regions: self.n_regions,
            questions: self.questions.clone(),
            row_cols,
            col_rows,
            weights,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            warnings: self.warnings.clone(),
        }
    }

    /// Recovers (region, question → level) for row `i` through the column map.
    pub fn decode_row(&self, i: usize) -> (String, Vec<(String, String)>) {
        let cols = &self.row_cols[i];
        let region = match &self.columns[cols[0] as usize] {
            Column::Region { region } => region.clone(),
            Column::Level { .. } => unreachable!("first entry of a row is its region"),
        };
        let responses = self
            .questions
            .iter()
            .map(|q| {
                let level = cols
                    .iter()
                    .map(|&c| c as usize)
                    .find(|c| q.columns.contains(c))
                    .map(|c| match &self.columns[c] {
                        Column::Level { level, .. } => level.clone(),
                        Column::Region { .. } => unreachable!(),
                    })
                    .unwrap_or_else(|| q.reference_level.clone());
                (q.id.clone(), level)
            })
            .collect();
        (region, responses)
    }

    pub fn both_classes_present(&self) -> bool {
        let poor = self.labels.iter().filter(|&&y| y > 0.5).count();
        poor > 0 && poor < self.n_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HouseholdRecord, QuestionSpec};

    fn rec(
        id: &str,
        weight: f64,
        region: usize,
        poverty: u8,
        responses: Vec<u16>,
    ) -> HouseholdRecord {
        HouseholdRecord {
            id: id.into(),
            weight,
            region,
            poverty,
            responses,
            consumption: None,
            urban: None,
        }
    }

    fn small() -> SurveyDataset {
        SurveyDataset::new(
            vec![
                rec("a", 2.0, 0, 0, vec![0, 0]),
                rec("b", 2.0, 1, 1, vec![1, 0]),
                rec("c", 2.0, 2, 0, vec![1, 0]),
            ],
            vec!["r1".into(), "r2".into(), "r3".into()],
            vec![
                QuestionSpec::new("q", "", vec!["no".into(), "yes".into()]).unwrap(),
                QuestionSpec::new("flat", "", vec!["x".into(), "y".into()]).unwrap(),
            ],
            "national",
        )
        .unwrap()
    }

    #[test]
    fn smallest_encoding() {
        let d = encode_design(&small(), None).unwrap();
        assert_eq!(d.n_cols(), 4);
        assert_eq!(d.penalty_factors(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.weights(), &[1.0, 1.0, 1.0]);
        assert_eq!(d.warnings().len(), 1, "single-level question dropped");
        assert_eq!(d.row(1), &[1, 3]);
        assert_eq!(
            d.decode_row(1).1,
            vec![("q".to_string(), "yes".to_string())]
        );
    }

    #[test]
    fn subset_errors() {
        let ds = small();
        assert!(encode_design(&ds, Some(&[])).is_err());
        assert!(encode_design(&ds, Some(&["nope".to_string()])).is_err());
        assert!(encode_design(&ds, Some(&["flat".to_string()])).is_err());
    }

    #[test]
    fn select_rows_renormalizes() {
        let d = encode_design(&small(), None).unwrap();
        let s = d.select_rows(&[0, 0, 2]);
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.column_rows(0), &[0, 1]);
        assert!((s.weights().iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }
}
