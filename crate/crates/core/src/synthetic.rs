//! Survey-like data with planted coefficients, used as ground truth for
//! every statistical test of the pipeline.

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{HouseholdRecord, Profile, QuestionSpec, SurveyDataset};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::solver::logistic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGen {
    pub id: String,
    /// Planted region intercept on the log-odds scale.
    pub intercept: f64,
    /// Relative sampling share (normalized over regions).
    #[serde(default = "one")]
    pub share: f64,
    #[serde(default = "half")]
    pub urban_share: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// Response `source` is copied with probability `prob`, otherwise the
/// question's own prevalences apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyOf {
    pub source: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionGen {
    pub id: String,
    #[serde(default)]
    pub prompt: String,
    pub levels: Vec<String>,
    pub prevalences: Vec<f64>,
    /// Planted log-odds contribution of each level (all zero for noise).
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_of: Option<CopyOf>,
}

impl QuestionGen {
    pub fn is_informative(&self) -> bool {
        self.coefficients.iter().any(|&c| c != 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightModel {
    Constant { value: f64 },
    LogNormal { sigma: f64 },
}

/// consumption = scale · exp(-slope · η + noise_sigma · Z)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionModel {
    pub scale: f64,
    pub slope: f64,
    pub noise_sigma: f64,
}

impl Default for ConsumptionModel {
    fn default() -> Self {
        ConsumptionModel {
            scale: 1000.0,
            slope: 0.6,
            noise_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub regions: Vec<RegionGen>,
    pub questions: Vec<QuestionGen>,
    pub weights: WeightModel,
    #[serde(default)]
    pub consumption: ConsumptionModel,
    #[serde(default = "national")]
    pub poverty_line_label: String,
    pub seed: u64,
}

fn national() -> String {
    "national".to_string()
}

fn level_labels(k: usize) -> Vec<String> {
    (0..k).map(|l| format!("L{l}")).collect()
}

impl SyntheticConfig {
    /// The desk-scale acceptance scenario: 10 regions, 40 questions with
    /// 2–6 levels, 5 informative questions with largest planted |coefficient|
    /// 1.0, 1.25, 1.5, 1.75, 2.0, lognormal(0.5) weights.
    pub fn default_scenario(n: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, "scenario", 0);
        let n_regions = 10;
        let regions = (0..n_regions)
            .map(|r| RegionGen {
                id: format!("R{:02}", r + 1),
                intercept: -0.3 + 0.9 * (2.0 * r as f64 / (n_regions - 1) as f64 - 1.0),
                share: 1.0,
                urban_share: 0.15 + 0.7 * ((r * 7) % n_regions) as f64 / (n_regions - 1) as f64,
            })
            .collect();
        // (question index, effect, sign); a positive sign makes the
        // reference level the least poor one
        let informative = [
            (0, 1.0, -1.0),
            (1, 1.25, 1.0),
            (5, 1.5, -1.0),
            (6, 1.75, 1.0),
            (10, 2.0, -1.0),
        ];
        let questions = (0..40)
            .map(|q| {
                let k = 2 + q % 5;
                let (prevalences, coefficients) =
                    match informative.iter().find(|(iq, _, _)| *iq == q) {
                        Some(&(_, effect, sign)) => (
                            vec![1.0 / k as f64; k],
                            (0..k)
                                .map(|l| sign * effect * l as f64 / (k - 1) as f64)
                                .collect(),
                        ),
                        None => {
                            let raw: Vec<f64> = (0..k).map(|_| 0.3 + rng.random::<f64>()).collect();
                            let s: f64 = raw.iter().sum();
                            (raw.iter().map(|x| x / s).collect(), vec![0.0; k])
                        }
                    };
                QuestionGen {
                    id: format!("q{:02}", q + 1),
                    prompt: format!("Synthetic question {}", q + 1),
                    levels: level_labels(k),
                    prevalences,
                    coefficients,
                    copy_of: None,
                }
            })
            .collect();
        SyntheticConfig {
            n,
            regions,
            questions,
            weights: WeightModel::LogNormal { sigma: 0.5 },
            consumption: ConsumptionModel::default(),
            poverty_line_label: national(),
            seed,
        }
    }

    /// Small scenario with independent noise questions only.
    pub fn null_scenario(n: usize, n_regions: usize, n_questions: usize, seed: u64) -> Self {
        SyntheticConfig {
            n,
            regions: (0..n_regions)
                .map(|r| RegionGen {
                    id: format!("R{}", r + 1),
                    intercept: 0.0,
                    share: 1.0,
                    urban_share: 0.5,
                })
                .collect(),
            questions: (0..n_questions)
                .map(|q| QuestionGen {
                    id: format!("q{:02}", q + 1),
                    prompt: String::new(),
                    levels: level_labels(2 + q % 3),
                    prevalences: vec![1.0 / (2 + q % 3) as f64; 2 + q % 3],
                    coefficients: vec![0.0; 2 + q % 3],
                    copy_of: None,
                })
                .collect(),
            weights: WeightModel::Constant { value: 1.0 },
            consumption: ConsumptionModel::default(),
            poverty_line_label: national(),
            seed,
        }
    }

    /// Default scenario where each informative question has a noise twin
    /// that copies its response with probability `prob`.
    pub fn correlated_pairs_scenario(n: usize, prob: f64, seed: u64) -> Self {
        let mut cfg = Self::default_scenario(n, seed);
        let informative: Vec<(String, usize)> = cfg
            .questions
            .iter()
            .filter(|q| q.is_informative())
            .map(|q| (q.id.clone(), q.levels.len()))
            .collect();
        let mut used = Vec::new();
        for (src, k) in informative {
            if let Some(twin) = cfg.questions.iter_mut().find(|q| {
                !q.is_informative()
                    && q.levels.len() == k
                    && q.copy_of.is_none()
                    && !used.contains(&q.id)
            }) {
                twin.copy_of = Some(CopyOf { source: src, prob });
                used.push(twin.id.clone());
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.regions.is_empty() || self.questions.is_empty() {
            return Err(Error::Validation(
                "synthetic config needs n > 0, at least one region and one question".into(),
            ));
        }
        for r in &self.regions {
            if !(r.share > 0.0) || !(0.0..=1.0).contains(&r.urban_share) {
                return Err(Error::Validation(format!(
                    "region `{}` has invalid shares",
                    r.id
                )));
            }
        }
        for (qi, q) in self.questions.iter().enumerate() {
            let k = q.levels.len();
            if k < 2 || q.prevalences.len() != k || q.coefficients.len() != k {
                return Err(Error::Validation(format!(
                    "question `{}` needs >= 2 levels with matching prevalences and coefficients",
                    q.id
                )));
            }
            let s: f64 = q.prevalences.iter().sum();
            if (s - 1.0).abs() > 1e-9 || q.prevalences.iter().any(|&p| p < 0.0) {
                return Err(Error::Validation(format!(
                    "prevalences of `{}` must be nonnegative and sum to 1",
                    q.id
                )));
            }
            if let Some(c) = &q.copy_of {
                let src = self.questions[..qi]
                    .iter()
                    .find(|s| s.id == c.source)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "`{}` copies `{}`, which must be an earlier question",
                            q.id, c.source
                        ))
                    })?;
                if src.levels.len() != k || !(0.0..=1.0).contains(&c.prob) {
                    return Err(Error::Validation(format!(
                        "`{}` copy source must have the same level count and prob in [0,1]",
                        q.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Planted parameters of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub region_intercepts: IndexMap<String, f64>,
    pub coefficients: IndexMap<String, IndexMap<String, f64>>,
    pub informative: Vec<String>,
    pub config: SyntheticConfig,
}

fn draw_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

pub fn generate(config: &SyntheticConfig) -> Result<(SurveyDataset, GroundTruth)> {
    config.validate()?;
    let total_share: f64 = config.regions.iter().map(|r| r.share).sum();
    let region_probs: Vec<f64> = config
        .regions
        .iter()
        .map(|r| r.share / total_share)
        .collect();
    let source_index: Vec<Option<usize>> = config
        .questions
        .iter()
        .map(|q| {
            q.copy_of
                .as_ref()
                .and_then(|c| config.questions.iter().position(|s| s.id == c.source))
        })
        .collect();

    let width = config.n.to_string().len().max(5);
    let records = (0..config.n)
        .map(|i| {
            // one stream per household keeps generation order-free
            let mut rng = seeded_rng(config.seed, "household", i as u64);
            let region = draw_categorical(&mut rng, &region_probs);
            let mut responses: Vec<u16> = Vec::with_capacity(config.questions.len());
            for (qi, q) in config.questions.iter().enumerate() {
                let own = draw_categorical(&mut rng, &q.prevalences) as u16;
                let copy_u: f64 = rng.random();
                let lvl = match (&q.copy_of, source_index[qi]) {
                    (Some(c), Some(s)) if copy_u < c.prob => responses[s],
                    _ => own,
                };
                responses.push(lvl);
            }
            let eta = config.regions[region].intercept
                + config
                    .questions
                    .iter()
                    .zip(&responses)
                    .map(|(q, &l)| q.coefficients[l as usize])
                    .sum::<f64>();
            let poverty = (rng.random::<f64>() < logistic(eta)) as u8;
            let z_w: f64 = StandardNormal.sample(&mut rng);
            let weight = match config.weights {
                WeightModel::Constant { value } => value,
                WeightModel::LogNormal { sigma } => 100.0 * (sigma * z_w).exp(),
            };
            let z_c: f64 = StandardNormal.sample(&mut rng);
            let cm = config.consumption;
            let consumption = cm.scale * (-cm.slope * eta + cm.noise_sigma * z_c).exp();
            let urban = rng.random::<f64>() < config.regions[region].urban_share;
            HouseholdRecord {
                id: format!("hh{:0width$}", i + 1),
                weight,
                region,
                poverty,
                responses,
                consumption: Some(consumption),
                urban: Some(urban),
            }
        })
        .collect();

    let questions = config
        .questions
        .iter()
        .map(|q| QuestionSpec::new(q.id.clone(), q.prompt.clone(), q.levels.clone()))
        .collect::<Result<Vec<_>>>()?;
    let dataset = SurveyDataset::new(
        records,
        config.regions.iter().map(|r| r.id.clone()).collect(),
        questions,
        config.poverty_line_label.clone(),
    )?;
    let truth = GroundTruth {
        region_intercepts: config
            .regions
            .iter()
            .map(|r| (r.id.clone(), r.intercept))
            .collect(),
        coefficients: config
            .questions
            .iter()
            .map(|q| {
                (
                    q.id.clone(),
                    q.levels
                        .iter()
                        .cloned()
                        .zip(q.coefficients.iter().copied())
                        .collect(),
                )
            })
            .collect(),
        informative: config
            .questions
            .iter()
            .filter(|q| q.is_informative())
            .map(|q| q.id.clone())
            .collect(),
        config: config.clone(),
    };
    Ok((dataset, truth))
}

/// Exact generative probability of poverty for a household profile.
pub fn oracle_rate(config: &SyntheticConfig, profile: &Profile) -> Result<f64> {
    let region = config
        .regions
        .iter()
        .find(|r| r.id == profile.region)
        .ok_or_else(|| Error::Validation(format!("unknown region `{}`", profile.region)))?;
    let mut eta = region.intercept;
    for q in &config.questions {
        let level = profile
            .responses
            .get(&q.id)
            .ok_or_else(|| Error::Validation(format!("missing response for `{}`", q.id)))?;
        let l =
            q.levels.iter().position(|x| x == level).ok_or_else(|| {
                Error::Validation(format!("unknown level `{level}` for `{}`", q.id))
            })?;
        eta += q.coefficients[l];
    }
    Ok(logistic(eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_shape() {
        let cfg = SyntheticConfig::default_scenario(100, 1);
        cfg.validate().unwrap();
        assert_eq!(cfg.regions.len(), 10);
        assert_eq!(cfg.questions.len(), 40);
        let informative: Vec<_> = cfg
            .questions
            .iter()
            .filter(|q| q.is_informative())
            .collect();
        assert_eq!(informative.len(), 5);
        for q in informative {
            let m = q.coefficients.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
            assert!((1.0..=2.0).contains(&m));
        }
    }

    #[test]
    fn oracle_closed_forms() {
        let mut cfg = SyntheticConfig::null_scenario(10, 2, 3, 0);
        let (ds, _) = generate(&cfg).unwrap();
        for i in 0..ds.len() {
            assert_eq!(oracle_rate(&cfg, &ds.profile(i)).unwrap(), 0.5);
        }
        cfg.questions[0].coefficients = vec![0.0, 1.0];
        let mut p = ds.profile(0);
        p.region = "R1".into();
        p.responses.insert("q01".into(), "L1".into());
        let r = oracle_rate(&cfg, &p).unwrap();
        assert!((r - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::default_scenario(300, 9);
        assert_eq!(generate(&cfg).unwrap().0, generate(&cfg).unwrap().0);
    }

    #[test]
    fn copy_of_must_reference_earlier_question() {
        let mut cfg = SyntheticConfig::null_scenario(10, 1, 3, 0);
        cfg.questions[0].copy_of = Some(CopyOf {
            source: "q02".into(),
            prob: 0.5,
        });
        assert!(cfg.validate().is_err());
    }
}
