//! Held-out evaluation: weighted quartiles of predicted probabilities by
//! group and poverty status, consumption deciles, inclusion/exclusion error
//! curves, AUC, and a comparison against a model using every question.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cv::{fit_at_cv_lambda, CvOptions, LambdaRule};
use crate::data::SurveyDataset;
use crate::design::encode_design;
use crate::error::{Error, Result};
use crate::scorecard::Scorecard;
use crate::solver::{logistic, weighted_deviance, ElasticNetFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub weight: f64,
    pub region: String,
    pub poverty: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub urban: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consumption: Option<f64>,
    pub linear_predictor: f64,
    pub exact_probability: f64,
    pub score: u32,
    pub lookup_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub records: Vec<Prediction>,
}

/// Exact and lookup predictions for every test household. Fails if any test
/// id also appears in `train_ids`.
pub fn predict_test(
    fit: &ElasticNetFit,
    card: &Scorecard,
    test: &SurveyDataset,
    train_ids: &HashSet<&str>,
) -> Result<PredictionSet> {
    let overlap: Vec<&str> = test
        .records
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| train_ids.contains(id))
        .take(5)
        .collect();
    if !overlap.is_empty() {
        return Err(Error::Validation(format!(
            "test households also used for training: {}",
            overlap.join(", ")
        )));
    }
    let records = test
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let profile = test.profile(i);
            let eta = fit.linear_predictor(&profile)?;
            let (score, lookup) =
                card.score_and_probability(&profile.region, &profile.responses)?;
            Ok(Prediction {
                id: r.id.clone(),
                weight: r.weight,
                region: profile.region,
                poverty: r.poverty,
                urban: r.urban,
                consumption: r.consumption,
                linear_predictor: eta,
                exact_probability: logistic(eta),
                score,
                lookup_probability: lookup,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet { records })
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_lookup_gap(&self) -> f64 {
        self.records
            .iter()
            .map(|p| (p.lookup_probability - p.exact_probability).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted binomial deviance of the exact predictions.
    pub fn deviance(&self) -> f64 {
        weighted_deviance(
            self.records
                .iter()
                .map(|p| (p.linear_predictor, p.poverty as f64, p.weight)),
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "id",
            "weight",
            "region",
            "poverty",
            "urban",
            "consumption",
            "exact_probability",
            "score",
            "lookup_probability",
        ])?;
        for p in &self.records {
            w.write_record([
                p.id.clone(),
                format!("{:?}", p.weight),
                p.region.clone(),
                p.poverty.to_string(),
                p.urban.map(|u| u.to_string()).unwrap_or_default(),
                p.consumption.map(|c| format!("{c:?}")).unwrap_or_default(),
                format!("{:?}", p.exact_probability),
                p.score.to_string(),
                format!("{:?}", p.lookup_probability),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Weighted quantile by linear interpolation on the weighted CDF.
///
/// Sorted values get plotting positions (S_k − w_k) / (W − w_n), where S_k
/// is the cumulative weight through k; with equal weights this is the
/// usual (k−1)/(n−1) rule.
pub fn weighted_quantile(values: &[(f64, f64)], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v: Vec<(f64, f64)> = values.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = v.len();
    let total: f64 = v.iter().map(|x| x.1).sum();
    let denom = total - v[n - 1].1;
    if n == 1 || denom <= 0.0 {
        return Some(v[n - 1].0);
    }
    let mut cum = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(x, w) in &v {
        let pos = cum / denom;
        cum += w;
        if pos >= q {
            return Some(match prev {
                Some((px, ppos)) if pos > ppos => {
                    (px + (x - px) * (q - ppos) / (pos - ppos)).clamp(px, x)
                }
                _ => x,
            });
        }
        prev = Some((x, pos));
    }
    Some(v[n - 1].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    National,
    Decile,
    Urban,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub grouping: Grouping,
    pub group: String,
    pub poor: bool,
    pub n: usize,
    pub weight: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedQuartiles {
    pub summaries: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl GroupedQuartiles {
    pub fn get(&self, group: &str, poor: bool) -> Option<&GroupSummary> {
        self.summaries
            .iter()
            .find(|s| s.group == group && s.poor == poor)
    }
}

/// Weighted quartiles of the exact predicted probability for each
/// (group, poverty status) cell. Cells with no households are skipped and
/// noted.
pub fn group_quartiles(preds: &PredictionSet, grouping: Grouping) -> Result<GroupedQuartiles> {
    let keys: Vec<String> = match grouping {
        Grouping::National => vec!["all".to_string(); preds.len()],
        Grouping::Region => preds.records.iter().map(|p| p.region.clone()).collect(),
        Grouping::Urban => preds
            .records
            .iter()
            .map(|p| match p.urban {
                Some(true) => Ok("urban".to_string()),
                Some(false) => Ok("rural".to_string()),
                None => Err(Error::Validation(format!(
                    "household `{}` has no urban flag",
                    p.id
                ))),
            })
            .collect::<Result<_>>()?,
        Grouping::Decile => consumption_deciles(preds)?
            .deciles
            .iter()
            .map(|d| d.to_string())
            .collect(),
    };
    let mut groups: Vec<String> = match grouping {
        Grouping::Decile => (1..=10).map(|d| d.to_string()).collect(),
        Grouping::Urban => vec!["rural".into(), "urban".into()],
        _ => {
            let mut seen = Vec::new();
            for k in &keys {
                if !seen.contains(k) {
                    seen.push(k.clone());
                }
            }
            seen
        }
    };
    if grouping == Grouping::Region {
        groups.sort();
    }
    let mut summaries = Vec::new();
    let mut notes = Vec::new();
    for g in &groups {
        for poor in [false, true] {
            let cell: Vec<(f64, f64)> = preds
                .records
                .iter()
                .zip(&keys)
                .filter(|(p, k)| *k == g && (p.poverty == 1) == poor)
                .map(|(p, _)| (p.exact_probability, p.weight))
                .collect();
            let status = if poor { "poor" } else { "non-poor" };
            if cell.is_empty() {
                notes.push(format!(
                    "{grouping:?} group `{g}` has no {status} households"
                ));
                continue;
            }
            let q = |x| weighted_quantile(&cell, x).expect("cell is nonempty");
            summaries.push(GroupSummary {
                grouping,
                group: g.clone(),
                poor,
                n: cell.len(),
                weight: cell.iter().map(|c| c.1).sum(),
                q25: q(0.25),
                q50: q(0.5),
                q75: q(0.75),
            });
        }
    }
    Ok(GroupedQuartiles { summaries, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileAssignment {
    /// Decile 1–10 per household, aligned with the prediction set.
    pub deciles: Vec<u8>,
    /// Weighted share of each decile.
    pub shares: Vec<f64>,
    /// Largest consumption in each decile (None when empty).
    pub upper_bounds: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Survey-weighted consumption deciles. Households are ranked by
/// consumption (id breaks ties) and each goes to the decile where its
/// weight starts on the cumulative scale, so a household that straddles a
/// cut point belongs to the lower decile.
pub fn consumption_deciles(preds: &PredictionSet) -> Result<DecileAssignment> {
    let mut order: Vec<(f64, usize)> = preds
        .records
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.consumption.map(|c| (c, i)).ok_or_else(|| {
                Error::Validation(format!("household `{}` has no consumption", p.id))
            })
        })
        .collect::<Result<_>>()?;
    if order.is_empty() {
        return Err(Error::Validation("no households to rank".into()));
    }
    order.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| preds.records[a.1].id.cmp(&preds.records[b.1].id))
    });
    let total: f64 = preds.records.iter().map(|p| p.weight).sum();
    let mut deciles = vec![0u8; preds.len()];
    let mut shares = vec![0.0; 10];
    let mut upper_bounds = vec![None; 10];
    let mut notes = Vec::new();
    let mut before = 0.0;
    for &(c, i) in &order {
        let w = preds.records[i].weight;
        let d = ((10.0 * before / total).floor() as usize).min(9);
        deciles[i] = d as u8 + 1;
        shares[d] += w / total;
        upper_bounds[d] = Some(c);
        if w > total / 10.0 {
            notes.push(format!(
                "household `{}` carries {:.1}% of the weight and spills past decile {}",
                preds.records[i].id,
                100.0 * w / total,
                d + 1
            ));
        }
        before += w;
    }
    for (d, b) in upper_bounds.iter().enumerate() {
        if b.is_none() {
            notes.push(format!("decile {} is empty", d + 1));
        }
    }
    Ok(DecileAssignment {
        deciles,
        shares,
        upper_bounds,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    /// Weighted share of poor households with p ≤ t.
    pub exclusion: f64,
    /// Weighted share of non-poor households with p > t.
    pub inclusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdReport {
    pub fn at(&self, threshold: f64) -> Option<&ThresholdRow> {
        self.rows
            .iter()
            .find(|r| (r.threshold - threshold).abs() < 1e-9)
    }

    /// Area under the ROC curve traced by the grid, by trapezoids.
    pub fn grid_auc(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.inclusion, 1.0 - r.exclusion))
            .collect();
        pts.windows(2)
            .map(|w| (w[0].0 - w[1].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["threshold", "exclusion_error", "inclusion_error"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.2}", r.threshold),
                format!("{:?}", r.exclusion),
                format!("{:?}", r.inclusion),
            ])?;
        }
        csv_string(w)
    }
}

fn class_split(
    preds: &PredictionSet,
    source: impl Fn(&Prediction) -> f64,
) -> Result<[Vec<(f64, f64)>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for p in &preds.records {
        out[p.poverty as usize].push((source(p), p.weight));
    }
    if out[0].is_empty() || out[1].is_empty() {
        return Err(Error::Validation(
            "evaluation needs both poor and non-poor households".into(),
        ));
    }
    for v in &mut out {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// Exclusion and inclusion error on the grid t = 0.00, 0.01, …, 1.00.
pub fn threshold_errors(preds: &PredictionSet) -> Result<ThresholdReport> {
    let [nonpoor, poor] = class_split(preds, |p| p.exact_probability)?;
    let prefix = |v: &[(f64, f64)]| {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(v.len() + 1);
        out.push(0.0);
        for &(_, w) in v {
            acc += w;
            out.push(acc);
        }
        out
    };
    let (pp, pn) = (prefix(&poor), prefix(&nonpoor));
    let (wp, wn) = (pp[poor.len()], pn[nonpoor.len()]);
    let rows = (0..=100)
        .map(|k| {
            let t = k as f64 / 100.0;
            let kp = poor.partition_point(|x| x.0 <= t);
            let kn = nonpoor.partition_point(|x| x.0 <= t);
            ThresholdRow {
                threshold: t,
                exclusion: pp[kp] / wp,
                inclusion: (wn - pn[kn]) / wn,
            }
        })
        .collect();
    Ok(ThresholdReport { rows })
}

/// Weighted probability that a random poor household outranks a random
/// non-poor one, ties counting one half.
pub fn weighted_auc(preds: &PredictionSet, source: impl Fn(&Prediction) -> f64) -> Result<f64> {
    let [nonpoor, poor] = class_split(preds, source)?;
    let wn: f64 = nonpoor.iter().map(|x| x.1).sum();
    let wp: f64 = poor.iter().map(|x| x.1).sum();
    let mut below = 0.0;
    let mut j = 0;
    let mut acc = 0.0;
    let mut i = 0;
    while i < poor.len() {
        let x = poor[i].0;
        let mut wx = 0.0;
        while i < poor.len() && poor[i].0 == x {
            wx += poor[i].1;
            i += 1;
        }
        while j < nonpoor.len() && nonpoor[j].0 < x {
            below += nonpoor[j].1;
            j += 1;
        }
        let tied: f64 = nonpoor[j..]
            .iter()
            .take_while(|n| n.0 == x)
            .map(|n| n.1)
            .sum();
        acc += wx * (below + 0.5 * tied);
    }
    Ok(acc / (wp * wn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n_questions: usize,
    pub lambda: f64,
    pub deviance: f64,
    pub auc: f64,
    pub national: GroupedQuartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullModelComparison {
    pub reduced: ModelSummary,
    pub full: ModelSummary,
    /// Deviance of the weighted training poverty rate applied to everyone.
    pub null_deviance: f64,
}

fn summarize(fit: &ElasticNetFit, preds: &PredictionSet) -> Result<ModelSummary> {
    Ok(ModelSummary {
        n_questions: fit.reference_levels.len(),
        lambda: fit.lambda,
        deviance: preds.deviance(),
        auc: weighted_auc(preds, |p| p.exact_probability)?,
        national: group_quartiles(preds, Grouping::National)?,
    })
}

/// Exact-probability predictions of `fit` on `test` without a scorecard.
pub fn model_predictions(fit: &ElasticNetFit, test: &SurveyDataset) -> Result<PredictionSet> {
    let records = test
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let profile = test.profile(i);
            let eta = fit.linear_predictor(&profile)?;
            Ok(Prediction {
                id: r.id.clone(),
                weight: r.weight,
                region: profile.region,
                poverty: r.poverty,
                urban: r.urban,
                consumption: r.consumption,
                linear_predictor: eta,
                exact_probability: logistic(eta),
                score: 0,
                lookup_probability: logistic(eta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet { records })
}

/// Fits every candidate question on `train` (λ by inner CV, minimum rule)
/// and sets its held-out performance beside the reduced model's.
pub fn compare_full_model(
    train: &SurveyDataset,
    test: &SurveyDataset,
    alpha: f64,
    inner_k: usize,
    seed: u64,
    cv: &CvOptions,
    reduced_fit: &ElasticNetFit,
    reduced_preds: &PredictionSet,
) -> Result<FullModelComparison> {
    let design = encode_design(train, None)?;
    let (full_fit, _) = fit_at_cv_lambda(&design, alpha, inner_k, seed, LambdaRule::Min, cv)?;
    let full_preds = model_predictions(&full_fit, test)?;
    let rate = train.weighted_poverty_rate();
    let null_eta = (rate / (1.0 - rate)).ln();
    let null_deviance = weighted_deviance(
        test.records
            .iter()
            .map(|r| (null_eta, r.poverty as f64, r.weight)),
    );
    Ok(FullModelComparison {
        reduced: summarize(reduced_fit, reduced_preds)?,
        full: summarize(&full_fit, &full_preds)?,
        null_deviance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_test: usize,
    pub weighted_poverty_rate: f64,
    pub deviance: f64,
    pub auc_rank: f64,
    pub auc_grid: f64,
    pub max_lookup_gap: f64,
    /// 0.25 · (S^max / 100) · 0.5 · number of questions.
    pub lookup_gap_bound: f64,
    pub groups: BTreeMap<String, GroupedQuartiles>,
    pub thresholds: ThresholdReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<FullModelComparison>,
}

/// Everything but the full-model comparison. Groupings whose inputs are
/// missing (no consumption or urban flag) are skipped.
pub fn evaluate(preds: &PredictionSet, card: &Scorecard) -> Result<EvaluationReport> {
    let thresholds = threshold_errors(preds)?;
    let mut groups = BTreeMap::new();
    for g in [
        Grouping::National,
        Grouping::Region,
        Grouping::Urban,
        Grouping::Decile,
    ] {
        let available = match g {
            Grouping::Urban => preds.records.iter().all(|p| p.urban.is_some()),
            Grouping::Decile => preds.records.iter().all(|p| p.consumption.is_some()),
            _ => true,
        };
        if available {
            let key = serde_json::to_value(g)?
                .as_str()
                .expect("unit variant")
                .to_string();
            groups.insert(key, group_quartiles(preds, g)?);
        }
    }
    let total: f64 = preds.records.iter().map(|p| p.weight).sum();
    Ok(EvaluationReport {
        n_test: preds.len(),
        weighted_poverty_rate: preds
            .records
            .iter()
            .map(|p| p.weight * p.poverty as f64)
            .sum::<f64>()
            / total,
        deviance: preds.deviance(),
        auc_rank: weighted_auc(preds, |p| p.exact_probability)?,
        auc_grid: thresholds.grid_auc(),
        max_lookup_gap: preds.max_lookup_gap(),
        lookup_gap_bound: 0.25 * (card.s_max / 100.0) * 0.5 * card.questions.len() as f64,
        groups,
        thresholds,
        comparison: None,
    })
}

impl EvaluationReport {
    /// One row per grouping × group × status × statistic.
    pub fn groups_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["grouping", "group", "status", "statistic", "value"])?;
        for (grouping, gq) in &self.groups {
            for s in &gq.summaries {
                let status = if s.poor { "poor" } else { "non-poor" };
                for (stat, v) in [
                    ("n", s.n as f64),
                    ("weight", s.weight),
                    ("q25", s.q25),
                    ("q50", s.q50),
                    ("q75", s.q75),
                ] {
                    w.write_record([grouping.as_str(), &s.group, status, stat, &format!("{v:?}")])?;
                }
            }
        }
        csv_string(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, w: f64, poor: u8, p: f64, c: Option<f64>) -> Prediction {
        Prediction {
            id: id.into(),
            weight: w,
            region: "A".into(),
            poverty: poor,
            urban: Some(poor == 1),
            consumption: c,
            linear_predictor: (p / (1.0 - p)).ln(),
            exact_probability: p,
            score: 0,
            lookup_probability: p,
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(weighted_quantile(&[(0.3, 2.0)], 0.25), Some(0.3));
        let v = [(0.8, 1.0), (0.2, 1.0)];
        assert!((weighted_quantile(&v, 0.5).unwrap() - 0.5).abs() < 1e-15);
        // equal weights reproduce the (k-1)/(n-1) rule
        let v: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0, 10.0]
            .iter()
            .map(|&x| (x, 3.0))
            .collect();
        assert!((weighted_quantile(&v, 0.25).unwrap() - 2.0).abs() < 1e-12);
        assert!((weighted_quantile(&v, 0.9).unwrap() - 7.6).abs() < 1e-12);
        assert_eq!(weighted_quantile(&[], 0.5), None);
    }

    #[test]
    fn equal_weight_deciles() {
        let preds = PredictionSet {
            records: (0..100)
                .map(|i| pred(&format!("h{i:03}"), 1.0, (i % 2) as u8, 0.5, Some(i as f64)))
                .collect(),
        };
        let d = consumption_deciles(&preds).unwrap();
        for k in 1..=10u8 {
            assert_eq!(d.deciles.iter().filter(|&&x| x == k).count(), 10);
        }
        assert!(d.notes.is_empty());
    }

    #[test]
    fn heavy_household_spills_down() {
        let mut records: Vec<Prediction> = (0..17)
            .map(|i| pred(&format!("h{i:02}"), 5.0, 0, 0.5, Some(10.0 + i as f64)))
            .collect();
        records.push(pred("big", 15.0, 1, 0.5, Some(0.0)));
        let preds = PredictionSet { records };
        let d = consumption_deciles(&preds).unwrap();
        assert_eq!(d.deciles[17], 1);
        assert!((d.shares[0] - 0.15).abs() < 1e-12);
        assert!((d.shares[1] - 0.05).abs() < 1e-12);
        assert!(d.notes.iter().any(|n| n.contains("big")));
    }

    #[test]
    fn threshold_endpoints_and_separation() {
        let preds = PredictionSet {
            records: vec![
                pred("a", 1.0, 1, 0.9, None),
                pred("b", 2.0, 1, 0.9, None),
                pred("c", 1.0, 0, 0.1, None),
                pred("d", 3.0, 0, 0.1, None),
            ],
        };
        let r = threshold_errors(&preds).unwrap();
        assert_eq!(r.rows.len(), 101);
        let t0 = r.at(0.0).unwrap();
        assert_eq!((t0.inclusion, t0.exclusion), (1.0, 0.0));
        let t5 = r.at(0.5).unwrap();
        assert_eq!((t5.inclusion, t5.exclusion), (0.0, 0.0));
        assert_eq!(weighted_auc(&preds, |p| p.exact_probability).unwrap(), 1.0);
        assert!((r.grid_auc() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let preds = PredictionSet {
            records: vec![pred("a", 1.0, 1, 0.9, None)],
        };
        assert!(threshold_errors(&preds).is_err());
    }

    #[test]
    fn auc_ties_count_half() {
        let preds = PredictionSet {
            records: vec![pred("a", 1.0, 1, 0.4, None), pred("b", 1.0, 0, 0.4, None)],
        };
        assert_eq!(weighted_auc(&preds, |p| p.exact_probability).unwrap(), 0.5);
    }

    #[test]
    fn empty_cells_are_noted() {
        let preds = PredictionSet {
            records: vec![pred("a", 1.0, 1, 0.4, None), pred("b", 1.0, 0, 0.2, None)],
        };
        let g = group_quartiles(&preds, Grouping::Urban).unwrap();
        assert_eq!(g.summaries.len(), 2);
        assert_eq!(g.notes.len(), 2);
    }
}
