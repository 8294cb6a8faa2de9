//! Integer scorecards and per-region lookup tables.
//!
//! For each question the level with the largest poverty coefficient becomes
//! the base level (0 points). Every other level earns points proportional
//! to how far its coefficient sits below that maximum, scaled so the best
//! possible answer set totals 100. Region effects never enter the points;
//! they live in the lookup tables through per-region adjusted intercepts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::QuestionSpec;
use crate::error::{Error, Result};
use crate::solver::{logistic, ElasticNetFit};

/// Highest printable score.
pub const MAX_SCORE: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebasedLevel {
    pub level: String,
    /// Fitted coefficient, zero for the reference level.
    pub coef: f64,
    /// Distance below the question's largest coefficient.
    pub shifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebasedQuestion {
    pub id: String,
    pub levels: Vec<RebasedLevel>,
    /// Largest level coefficient, folded into every adjusted intercept.
    pub shift: f64,
}

impl RebasedQuestion {
    pub fn max_shifted(&self) -> f64 {
        self.levels.iter().map(|l| l.shifted).fold(0.0, f64::max)
    }

    pub fn base_level(&self) -> &str {
        &self
            .levels
            .iter()
            .find(|l| l.shifted == 0.0)
            .expect("the maximal level has zero shift")
            .level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rebased {
    pub questions: Vec<RebasedQuestion>,
    /// Region id → intercept + region coefficient + Σ question shifts.
    pub adjusted_intercepts: Vec<(String, f64)>,
}

impl Rebased {
    /// Linear predictor rebuilt as K_r − Σ_q shifted level.
    pub fn linear_predictor(
        &self,
        region: &str,
        responses: &BTreeMap<String, String>,
    ) -> Result<f64> {
        let k = self
            .adjusted_intercepts
            .iter()
            .find(|(r, _)| r == region)
            .map(|&(_, k)| k)
            .ok_or_else(|| Error::Validation(format!("unknown region `{region}`")))?;
        let mut eta = k;
        for q in &self.questions {
            let level = responses.get(&q.id).ok_or_else(|| {
                Error::Validation(format!("missing response for question `{}`", q.id))
            })?;
            let l = q.levels.iter().find(|l| &l.level == level).ok_or_else(|| {
                Error::Validation(format!("invalid level `{level}` for question `{}`", q.id))
            })?;
            eta -= l.shifted;
        }
        Ok(eta)
    }
}

/// Shifts each question so its most poverty-associated level sits at zero
/// and every other level is a nonnegative distance below it.
pub fn rebase(fit: &ElasticNetFit) -> Rebased {
    let questions: Vec<RebasedQuestion> = fit
        .reference_levels
        .keys()
        .map(|q| {
            let coefs = fit.question_coefs(q).expect("question listed in the fit");
            let shift = coefs
                .iter()
                .map(|&(_, b)| b)
                .fold(f64::NEG_INFINITY, f64::max);
            RebasedQuestion {
                id: q.clone(),
                levels: coefs
                    .into_iter()
                    .map(|(level, coef)| RebasedLevel {
                        level,
                        coef,
                        shifted: shift - coef,
                    })
                    .collect(),
                shift,
            }
        })
        .collect();
    let total_shift: f64 = questions.iter().map(|q| q.shift).sum();
    let adjusted_intercepts = fit
        .regions()
        .map(|(r, b)| (r.to_string(), fit.intercept + b + total_shift))
        .collect();
    Rebased {
        questions,
        adjusted_intercepts,
    }
}

/// Largest raw score any response combination can reach.
pub fn compute_smax(rebased: &Rebased) -> Result<f64> {
    let s: f64 = rebased
        .questions
        .iter()
        .map(RebasedQuestion::max_shifted)
        .sum();
    if !(s > 0.0) {
        return Err(Error::Numerical(
            "degenerate scorecard: every selected question has all-zero coefficients".into(),
        ));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingAdjustment {
    pub question: String,
    pub from: u32,
    pub to: u32,
}

/// Integer points per question and level, in rebased order, plus any
/// corrections applied to keep the maximal total at or below 100.
///
/// Rounding is half away from zero. When the rounded per-question maxima
/// add up past 100, the questions whose maximum was rounded up the most
/// lose one point on their top levels until the total fits.
pub fn round_weights(
    rebased: &Rebased,
    s_max: f64,
) -> Result<(Vec<Vec<u32>>, Vec<RoundingAdjustment>)> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::Validation(format!(
            "S^max must be positive, got {s_max}"
        )));
    }
    let scale = 100.0 / s_max;
    let mut weights: Vec<Vec<u32>> = rebased
        .questions
        .iter()
        .map(|q| {
            q.levels
                .iter()
                .map(|l| ((scale * l.shifted).round() as u32).min(MAX_SCORE))
                .collect()
        })
        .collect();

    let exact_max: Vec<f64> = rebased
        .questions
        .iter()
        .map(|q| scale * q.max_shifted())
        .collect();
    let top = |w: &Vec<u32>| w.iter().copied().max().unwrap_or(0);
    let mut total: u32 = weights.iter().map(top).sum();
    let mut adjustments = Vec::new();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ea = top(&weights[a]) as f64 - exact_max[a];
        let eb = top(&weights[b]) as f64 - exact_max[b];
        eb.total_cmp(&ea).then(a.cmp(&b))
    });
    for q in order {
        if total <= MAX_SCORE {
            break;
        }
        let m = top(&weights[q]);
        if m == 0 || (m as f64) <= exact_max[q] {
            continue;
        }
        for w in weights[q].iter_mut().filter(|w| **w == m) {
            *w -= 1;
        }
        total -= 1;
        adjustments.push(RoundingAdjustment {
            question: rebased.questions[q].id.clone(),
            from: m,
            to: m - 1,
        });
    }
    if total > MAX_SCORE {
        return Err(Error::Numerical(format!(
            "rounded weights total {total} points and could not be brought down to {MAX_SCORE}"
        )));
    }
    Ok((weights, adjustments))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub region: String,
    pub adjusted_intercept: f64,
    /// `probabilities[s]` for score s = 0..=100.
    pub probabilities: Vec<f64>,
}

impl LookupTable {
    pub fn probability(&self, score: u32) -> Option<f64> {
        self.probabilities.get(score as usize).copied()
    }
}

/// One table per region: p_r(S) = logistic(K_r − S · S^max / 100).
pub fn build_lookup(adjusted_intercepts: &[(String, f64)], s_max: f64) -> Result<Vec<LookupTable>> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::Validation(format!(
            "S^max must be positive, got {s_max}"
        )));
    }
    let step = s_max / 100.0;
    adjusted_intercepts
        .iter()
        .map(|(region, k)| {
            let probabilities: Vec<f64> = (0..=MAX_SCORE)
                .map(|s| logistic(k - step * s as f64))
                .collect();
            let ok = probabilities.iter().all(|&p| p > 0.0 && p < 1.0)
                && probabilities.windows(2).all(|w| w[1] < w[0]);
            if !ok {
                return Err(Error::Numerical(format!(
                    "lookup table for region `{region}` saturates (K_r = {k}, S^max = {s_max})"
                )));
            }
            Ok(LookupTable {
                region: region.clone(),
                adjusted_intercept: *k,
                probabilities,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardLevel {
    pub level: String,
    pub points: u32,
    /// 100 · shifted / S^max before rounding.
    pub scaled: f64,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardQuestion {
    pub id: String,
    pub prompt: String,
    pub base_level: String,
    pub levels: Vec<CardLevel>,
    pub rebase_constant: f64,
}

impl CardQuestion {
    pub fn max_points(&self) -> u32 {
        self.levels.iter().map(|l| l.points).max().unwrap_or(0)
    }

    pub fn points_for(&self, level: &str) -> Option<u32> {
        self.levels
            .iter()
            .find(|l| l.level == level)
            .map(|l| l.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub poverty_line_label: String,
    pub questions: Vec<CardQuestion>,
    pub s_max: f64,
    pub scale: f64,
    pub region_tables: Vec<LookupTable>,
    #[serde(default)]
    pub rounding_adjustments: Vec<RoundingAdjustment>,
    pub model: ElasticNetFit,
}

/// Builds the card from a fit over exactly the selected questions.
/// `specs` supplies prompts; levels keep the fit's order.
pub fn build_scorecard(
    fit: &ElasticNetFit,
    specs: &[QuestionSpec],
    poverty_line_label: &str,
) -> Result<Scorecard> {
    let rebased = rebase(fit);
    let s_max = compute_smax(&rebased)?;
    let (weights, rounding_adjustments) = round_weights(&rebased, s_max)?;
    let region_tables = build_lookup(&rebased.adjusted_intercepts, s_max)?;
    let scale = 100.0 / s_max;
    let questions = rebased
        .questions
        .iter()
        .zip(weights)
        .map(|(q, w)| CardQuestion {
            id: q.id.clone(),
            prompt: specs
                .iter()
                .find(|s| s.id == q.id)
                .map(|s| s.prompt.clone())
                .unwrap_or_default(),
            base_level: q.base_level().to_string(),
            levels: q
                .levels
                .iter()
                .zip(w)
                .map(|(l, points)| CardLevel {
                    level: l.level.clone(),
                    points,
                    scaled: scale * l.shifted,
                    coef: l.coef,
                })
                .collect(),
            rebase_constant: q.shift,
        })
        .collect();
    Ok(Scorecard {
        poverty_line_label: poverty_line_label.to_string(),
        questions,
        s_max,
        scale,
        region_tables,
        rounding_adjustments,
        model: fit.clone(),
    })
}

impl Scorecard {
    pub fn question(&self, id: &str) -> Option<&CardQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn table(&self, region: &str) -> Option<&LookupTable> {
        self.region_tables.iter().find(|t| t.region == region)
    }

    /// Σ over questions of the largest unrounded scaled level.
    pub fn unrounded_max_total(&self) -> f64 {
        self.questions
            .iter()
            .map(|q| q.levels.iter().map(|l| l.scaled).fold(0.0, f64::max))
            .sum()
    }

    pub fn max_total(&self) -> u32 {
        self.questions.iter().map(CardQuestion::max_points).sum()
    }

    /// Sum of the points for the given answers.
    pub fn score(&self, responses: &BTreeMap<String, String>) -> Result<u32> {
        let mut s = 0;
        for q in &self.questions {
            let level = responses.get(&q.id).ok_or_else(|| {
                Error::Validation(format!("missing response for question `{}`", q.id))
            })?;
            s += q.points_for(level).ok_or_else(|| {
                Error::Validation(format!("invalid level `{level}` for question `{}`", q.id))
            })?;
        }
        Ok(s)
    }

    /// (score, lookup probability) for a household in `region`.
    pub fn score_and_probability(
        &self,
        region: &str,
        responses: &BTreeMap<String, String>,
    ) -> Result<(u32, f64)> {
        let table = self
            .table(region)
            .ok_or_else(|| Error::Validation(format!("no lookup table for region `{region}`")))?;
        let s = self.score(responses)?;
        let p = table.probability(s).expect("scores never exceed 100");
        Ok((s, p))
    }

    pub fn validate(&self) -> Result<()> {
        for q in &self.questions {
            if q.levels.iter().all(|l| l.points != 0) {
                return Err(Error::Validation(format!(
                    "question `{}` has no zero-point level",
                    q.id
                )));
            }
        }
        if self.max_total() > MAX_SCORE {
            return Err(Error::Validation(format!(
                "maximal score {} exceeds {MAX_SCORE}",
                self.max_total()
            )));
        }
        for t in &self.region_tables {
            if t.probabilities.len() != MAX_SCORE as usize + 1 {
                return Err(Error::Validation(format!(
                    "lookup table for `{}` has {} rows",
                    t.region,
                    t.probabilities.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "POVERTY PROBABILITY SCORECARD");
        let _ = writeln!(out, "Poverty line: {}", self.poverty_line_label);
        let _ = writeln!(out);
        let width = self
            .questions
            .iter()
            .flat_map(|q| q.levels.iter().map(|l| l.level.chars().count()))
            .max()
            .unwrap_or(0)
            .max(20);
        for (i, q) in self.questions.iter().enumerate() {
            let prompt = if q.prompt.is_empty() {
                &q.id
            } else {
                &q.prompt
            };
            let _ = writeln!(out, "{:>2}. [{}] {}", i + 1, q.id, prompt);
            for l in &q.levels {
                let _ = writeln!(out, "      {:<width$}  {:>3}", l.level, l.points);
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "SCORE = sum of the points above (0 to {MAX_SCORE})");
        for t in &self.region_tables {
            let _ = writeln!(out);
            let _ = writeln!(out, "LOOKUP TABLE: region {}", t.region);
            let _ = writeln!(out, "score  probability");
            for (s, p) in t.probabilities.iter().enumerate() {
                let _ = writeln!(out, "{s:>5}  {p:>11.3}");
            }
        }
        out
    }

    /// Points as CSV rows (question, level, points).
    pub fn weights_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["question", "level", "points"])?;
        for q in &self.questions {
            for l in &q.levels {
                w.write_record([q.id.as_str(), l.level.as_str(), &l.points.to_string()])?;
            }
        }
        finish_csv(w)
    }

    /// Lookup tables as CSV rows (region, score, probability), full precision.
    pub fn lookup_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["region", "score", "probability"])?;
        for t in &self.region_tables {
            for (s, p) in t.probabilities.iter().enumerate() {
                w.write_record([t.region.as_str(), &s.to_string(), &format!("{p:?}")])?;
            }
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    Json,
    Csv,
}

/// Writes the card in `format`. CSV produces `<stem>_weights.csv` and
/// `<stem>_lookup.csv` next to `path`.
pub fn export_scorecard(card: &Scorecard, format: ExportFormat, path: &Path) -> Result<()> {
    let write = |p: &Path, body: &[u8]| -> Result<()> {
        let mut f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        f.write_all(body).map_err(|e| Error::io(p, e))
    };
    match format {
        ExportFormat::Text => write(path, card.to_text().as_bytes()),
        ExportFormat::Json => write(path, &crate::json::to_pretty_bytes(card)?),
        ExportFormat::Csv => {
            let stem = path.with_extension("");
            let stem = stem.to_string_lossy();
            write(
                Path::new(&format!("{stem}_weights.csv")),
                card.weights_csv()?.as_bytes(),
            )?;
            write(
                Path::new(&format!("{stem}_lookup.csv")),
                card.lookup_csv()?.as_bytes(),
            )
        }
    }
}

pub fn import_scorecard(path: &Path) -> Result<Scorecard> {
    let card: Scorecard = crate::json::read(path)?;
    card.validate()?;
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Column;
    use indexmap::IndexMap;

    fn fit_with(questions: &[(&str, &[f64])], regions: &[(&str, f64)]) -> ElasticNetFit {
        let mut columns = Vec::new();
        let mut coefs = Vec::new();
        let mut reference_levels = IndexMap::new();
        for &(r, b) in regions {
            columns.push(Column::Region { region: r.into() });
            coefs.push(b);
        }
        for &(q, levels) in questions {
            reference_levels.insert(q.to_string(), "L0".to_string());
            for (i, &b) in levels.iter().enumerate() {
                columns.push(Column::Level {
                    question: q.into(),
                    level: format!("L{}", i + 1),
                });
                coefs.push(b);
            }
        }
        ElasticNetFit {
            intercept: 0.0,
            columns,
            coefs,
            reference_levels,
            lambda: 0.01,
            alpha: 1.0,
            converged: true,
            iterations: 3,
        }
    }

    #[test]
    fn two_level_shift() {
        let r = rebase(&fit_with(&[("q", &[-1.2])], &[("A", 0.3)]));
        let q = &r.questions[0];
        assert_eq!(q.levels[0].shifted, 0.0);
        assert!((q.levels[1].shifted - 1.2).abs() < 1e-15);
        assert_eq!(q.base_level(), "L0");
        assert_eq!(compute_smax(&r).unwrap(), 1.2);
        let (w, adj) = round_weights(&r, 1.2).unwrap();
        assert_eq!(w, vec![vec![0, 100]]);
        assert!(adj.is_empty());
    }

    #[test]
    fn positive_coefficient_becomes_base() {
        let r = rebase(&fit_with(&[("q", &[0.5, -0.25])], &[("A", -1.0)]));
        assert_eq!(r.questions[0].base_level(), "L1");
        assert_eq!(r.questions[0].shift, 0.5);
        assert!((r.adjusted_intercepts[0].1 - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn inactive_questions_are_degenerate() {
        let r = rebase(&fit_with(&[("q", &[0.0, 0.0])], &[("A", 0.0)]));
        assert!(r.questions[0].levels.iter().all(|l| l.shifted == 0.0));
        assert!(compute_smax(&r).is_err());
    }

    #[test]
    fn smax_is_additive() {
        let r = rebase(&fit_with(&[("a", &[-1.2]), ("b", &[-0.8])], &[("A", 0.0)]));
        assert!((compute_smax(&r).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn small_levels_round_to_zero() {
        let r = rebase(&fit_with(
            &[("a", &[-0.004]), ("b", &[-0.996])],
            &[("A", 0.0)],
        ));
        let (w, _) = round_weights(&r, 1.0).unwrap();
        assert_eq!(w[0], vec![0, 0]);
        assert_eq!(w[1], vec![0, 100]);
    }

    #[test]
    fn overshoot_is_corrected() {
        // three maxima of 33.5 each round to 34
        let r = rebase(&fit_with(
            &[("a", &[-1.0]), ("b", &[-1.0]), ("c", &[-0.985])],
            &[("A", 0.0)],
        ));
        let smax = compute_smax(&r).unwrap();
        let (w, adj) = round_weights(&r, smax).unwrap();
        let total: u32 = w.iter().map(|q| q.iter().max().unwrap()).sum();
        assert_eq!(total, 100);
        assert_eq!(adj.len(), 1);
        assert_eq!(adj[0].question, "a");
    }

    #[test]
    fn lookup_endpoints_and_order() {
        let t = build_lookup(&[("A".into(), 1.5)], 2.0).unwrap();
        assert_eq!(t[0].probabilities.len(), 101);
        assert_eq!(t[0].probabilities[0], logistic(1.5));
        assert!((t[0].probabilities[100] - logistic(-0.5)).abs() < 1e-15);
        assert!(t[0].probabilities.windows(2).all(|w| w[1] < w[0]));
        assert!(build_lookup(&[("A".into(), 1.5)], 0.0).is_err());
    }

    #[test]
    fn scoring_errors_name_the_question() {
        let f = fit_with(&[("q", &[-1.0, -2.0])], &[("A", 0.0)]);
        let card = build_scorecard(&f, &[], "national").unwrap();
        let mut resp = BTreeMap::new();
        let e = card.score(&resp).unwrap_err().to_string();
        assert!(e.contains("`q`"));
        resp.insert("q".into(), "nope".into());
        assert!(card.score(&resp).unwrap_err().to_string().contains("`q`"));
        resp.insert("q".into(), "L0".into());
        assert_eq!(
            card.score_and_probability("A", &resp).unwrap(),
            (0, logistic(0.0))
        );
        resp.insert("q".into(), "L2".into());
        assert_eq!(card.score(&resp).unwrap(), 100);
    }
}
