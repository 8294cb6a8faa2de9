//! End-to-end run orchestration with resumable, file-backed stages.
//!
//! Every stage reads its inputs from the run directory and writes its
//! outputs there, so running stages one at a time gives the same bytes as a
//! single monolithic run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cv::{self, fit_at_cv_lambda, AlphaCvReport, CvCurve, LambdaRule};
use crate::data::{load_dataset, split_indices, write_dataset, Schema, SurveyDataset};
use crate::design::encode_design;
use crate::error::{Error, Result};
use crate::evaluation::{self, EvaluationReport};
use crate::json;
use crate::rng::derive_seed;
use crate::scorecard::{self, ExportFormat, Scorecard};
use crate::selection::{
    select_top_questions, selection_frequencies, SelectedQuestionSet, SelectionConfig,
    SelectionFrequencyTable,
};
use crate::solver::ElasticNetFit;
use crate::synthetic::{self, SyntheticConfig};

pub const DATA_CSV: &str = "data.csv";
pub const SCHEMA_JSON: &str = "schema.json";
pub const GROUND_TRUTH_JSON: &str = "ground_truth.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SyntheticSource {
    Scenario {
        scenario: Scenario,
        n: usize,
        seed: u64,
    },
    Full(SyntheticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Default,
}

impl SyntheticSource {
    pub fn config(&self) -> SyntheticConfig {
        match self {
            SyntheticSource::Scenario {
                scenario: Scenario::Default,
                n,
                seed,
            } => SyntheticConfig::default_scenario(*n, *seed),
            SyntheticSource::Full(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Survey CSV plus schema; paths are relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    /// Generate the data instead; written into the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    pub selection: SelectionConfig,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_k_outer")]
    pub k_outer: usize,
    pub split_seed: u64,
    pub cv_seed: u64,
    #[serde(default = "yes")]
    pub compare_full_model: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Stages to run; `["all"]` or `["evaluate-only"]` are accepted too.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<String>>,
}

fn default_alpha_grid() -> Vec<f64> {
    vec![0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
}
fn default_k_outer() -> usize {
    5
}
fn yes() -> bool {
    true
}

impl RunConfig {
    /// Parses and validates; relative data paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        if !path.is_file() {
            return Err(Error::Validation(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let mut cfg: RunConfig = json::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &mut cfg.data {
            d.csv = base.join(&d.csv);
            d.schema = base.join(&d.schema);
        }
        if let Some(o) = &mut cfg.output_dir {
            *o = base.join(&*o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "config sets both `data` and `synthetic`; choose one".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Validation(
                    "config needs `data` or `synthetic`".into(),
                ))
            }
            (Some(d), None) => {
                for p in [&d.csv, &d.schema] {
                    if !p.is_file() {
                        return Err(Error::Validation(format!(
                            "input file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
            (None, Some(s)) => s.config().validate()?,
        }
        self.selection.validate()?;
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(0.05..=1.0).contains(a)) {
            return Err(Error::Validation(
                "alpha_grid must be nonempty with values in [0.05, 1]".into(),
            ));
        }
        if self.k_outer < 2 {
            return Err(Error::Validation("k_outer must be at least 2".into()));
        }
        if let Some(s) = &self.stages {
            parse_stages(s)?;
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.split_seed = derive_seed(seed, "split", 0);
        self.selection.seed = derive_seed(seed, "selection", 0);
        self.cv_seed = derive_seed(seed, "cv", 0);
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Split,
    AlphaCv,
    Selection,
    Fit,
    Scorecard,
    Evaluation,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Split,
        Stage::AlphaCv,
        Stage::Selection,
        Stage::Fit,
        Stage::Scorecard,
        Stage::Evaluation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::AlphaCv => "alpha_cv",
            Stage::Selection => "selection",
            Stage::Fit => "fit",
            Stage::Scorecard => "scorecard",
            Stage::Evaluation => "evaluation",
        }
    }

    pub fn output(self) -> &'static str {
        match self {
            Stage::Split => "split.json",
            Stage::AlphaCv => "alpha_cv.json",
            Stage::Selection => "selection.json",
            Stage::Fit => "fit.json",
            Stage::Scorecard => "scorecard.json",
            Stage::Evaluation => "evaluation.json",
        }
    }
}

/// Accepts stage names, `all`, `evaluate-only`, and the subcommand groups
/// `select` (split, alpha_cv, selection) and `evaluate`.
pub fn parse_stages(names: &[String]) -> Result<Vec<Stage>> {
    let mut out = Vec::new();
    for n in names {
        let add: &[Stage] = match n.as_str() {
            "all" => &Stage::ALL,
            "select" => &[Stage::Split, Stage::AlphaCv, Stage::Selection],
            "evaluate" | "evaluate-only" | "evaluation" => &[Stage::Evaluation],
            "split" => &[Stage::Split],
            "alpha_cv" | "alpha-cv" => &[Stage::AlphaCv],
            "selection" => &[Stage::Selection],
            "fit" => &[Stage::Fit],
            "scorecard" => &[Stage::Scorecard],
            other => return Err(Error::Validation(format!("unknown stage `{other}`"))),
        };
        out.extend_from_slice(add);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArtifact {
    pub seed: u64,
    pub n: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub alpha: f64,
    pub table: SelectionFrequencyTable,
    pub selected: SelectedQuestionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub alpha: f64,
    pub questions: Vec<String>,
    pub fit: ElasticNetFit,
    pub curve: CvCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<ManifestEntry>,
    /// Auxiliary files (CSV tables, printable card, generated data).
    pub files: BTreeMap<String, String>,
}

/// A run directory bound to a config.
pub struct Run {
    pub config: RunConfig,
    pub dir: PathBuf,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic dataset as CSV + schema JSON + ground truth JSON.
pub fn write_synthetic(config: &SyntheticConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (ds, truth) = synthetic::generate(config)?;
    let csv_path = dir.join(DATA_CSV);
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let schema = write_dataset(&ds, std::io::BufWriter::new(f))?;
    json::write(&dir.join(SCHEMA_JSON), &schema)?;
    json::write(&dir.join(GROUND_TRUTH_JSON), &truth)
}

impl Run {
    pub fn new(config: RunConfig, dir: impl Into<PathBuf>) -> Result<Run> {
        config.validate()?;
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Run { config, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn data_paths(&self) -> (PathBuf, PathBuf) {
        match &self.config.data {
            Some(d) => (d.csv.clone(), d.schema.clone()),
            None => (self.path(DATA_CSV), self.path(SCHEMA_JSON)),
        }
    }

    /// Always read from CSV, generating it first for synthetic configs.
    pub fn dataset(&self) -> Result<SurveyDataset> {
        if let Some(s) = &self.config.synthetic {
            if !self.path(DATA_CSV).is_file() || !self.path(SCHEMA_JSON).is_file() {
                write_synthetic(&s.config(), &self.dir)?;
            }
        }
        let (csv, schema) = self.data_paths();
        load_dataset(&csv, &Schema::from_json_file(&schema)?)
    }

    fn load<T: serde::de::DeserializeOwned>(&self, stage: Stage) -> Result<T> {
        let p = self.path(stage.output());
        if !p.is_file() {
            return Err(Error::MissingArtifact {
                stage: stage.name(),
                path: p,
            });
        }
        json::read(&p)
    }

    fn train_test(&self, ds: &SurveyDataset) -> Result<(SurveyDataset, SurveyDataset)> {
        let split: SplitArtifact = self.load(Stage::Split)?;
        let pos: HashMap<&str, usize> = ds
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let pick = |ids: &[String]| -> Result<SurveyDataset> {
            let idx = ids
                .iter()
                .map(|id| {
                    pos.get(id.as_str()).copied().ok_or_else(|| {
                        Error::Validation(format!("split refers to unknown household `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ds.subset(&idx))
        };
        Ok((pick(&split.train)?, pick(&split.test)?))
    }

    /// Runs `stages` in order; each failure is tagged with its stage name.
    /// The manifest is rewritten afterwards from whatever outputs exist.
    pub fn execute(&self, stages: &[Stage]) -> Result<Manifest> {
        for &s in stages {
            info!("stage {}", s.name());
            self.run_stage(s).map_err(|e| e.in_stage(s.name()))?;
        }
        self.write_manifest()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        let ds = self.dataset()?;
        let cfg = &self.config;
        match stage {
            Stage::Split => {
                let s = split_indices(ds.len(), cfg.split_seed)?;
                let ids = |v: &[usize]| v.iter().map(|&i| ds.records[i].id.clone()).collect();
                json::write(
                    &self.path(stage.output()),
                    &SplitArtifact {
                        seed: cfg.split_seed,
                        n: ds.len(),
                        train: ids(&s.train),
                        test: ids(&s.test),
                    },
                )
            }
            Stage::AlphaCv => {
                let (train, _) = self.train_test(&ds)?;
                let (_, report) = cv::outer_cv_alpha(
                    &train,
                    &cfg.alpha_grid,
                    &cfg.selection,
                    cfg.k_outer,
                    derive_seed(cfg.cv_seed, "alpha-cv", 0),
                )?;
                json::write(&self.path(stage.output()), &report)
            }
            Stage::Selection => {
                let (train, _) = self.train_test(&ds)?;
                let alpha = self.load::<AlphaCvReport>(Stage::AlphaCv)?.chosen_alpha;
                let table = selection_frequencies(&train, alpha, &cfg.selection)?;
                let selected = select_top_questions(&table, cfg.selection.k_questions)?;
                json::write(
                    &self.path(stage.output()),
                    &SelectionArtifact {
                        alpha,
                        table,
                        selected,
                    },
                )
            }
            Stage::Fit => {
                let (train, _) = self.train_test(&ds)?;
                let sel: SelectionArtifact = self.load(Stage::Selection)?;
                let design = encode_design(&train, Some(&sel.selected.questions))?;
                let (fit, curve) = fit_at_cv_lambda(
                    &design,
                    sel.alpha,
                    cfg.selection.inner_cv_k,
                    derive_seed(cfg.cv_seed, "final-fit", 0),
                    LambdaRule::Min,
                    &cfg.selection.cv,
                )?;
                json::write(
                    &self.path(stage.output()),
                    &FitArtifact {
                        alpha: sel.alpha,
                        questions: sel.selected.questions,
                        fit,
                        curve,
                    },
                )
            }
            Stage::Scorecard => {
                let fit: FitArtifact = self.load(Stage::Fit)?;
                let card =
                    scorecard::build_scorecard(&fit.fit, &ds.questions, &ds.poverty_line_label)?;
                json::write(&self.path(stage.output()), &card)?;
                scorecard::export_scorecard(
                    &card,
                    ExportFormat::Text,
                    &self.path("scorecard.txt"),
                )?;
                scorecard::export_scorecard(&card, ExportFormat::Csv, &self.path("scorecard.csv"))
            }
            Stage::Evaluation => {
                let (train, test) = self.train_test(&ds)?;
                let fit: FitArtifact = self.load(Stage::Fit)?;
                let card: Scorecard = self.load(Stage::Scorecard)?;
                let train_ids: HashSet<&str> =
                    train.records.iter().map(|r| r.id.as_str()).collect();
                let preds = evaluation::predict_test(&fit.fit, &card, &test, &train_ids)?;
                let mut report: EvaluationReport = evaluation::evaluate(&preds, &card)?;
                if cfg.compare_full_model {
                    report.comparison = Some(evaluation::compare_full_model(
                        &train,
                        &test,
                        fit.alpha,
                        cfg.selection.inner_cv_k,
                        derive_seed(cfg.cv_seed, "full-model", 0),
                        &cfg.selection.cv,
                        &fit.fit,
                        &preds,
                    )?);
                }
                json::write(&self.path(stage.output()), &report)?;
                write_text(&self.path("predictions.csv"), &preds.to_csv()?)?;
                write_text(&self.path("thresholds.csv"), &report.thresholds.to_csv()?)?;
                write_text(&self.path("groups.csv"), &report.groups_csv()?)
            }
        }
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        let mut stages = Vec::new();
        for s in Stage::ALL {
            let p = self.path(s.output());
            if p.is_file() {
                stages.push(ManifestEntry {
                    stage: s.name().to_string(),
                    file: s.output().to_string(),
                    sha256: sha256_file(&p)?,
                });
            }
        }
        let mut files = BTreeMap::new();
        for name in [
            DATA_CSV,
            SCHEMA_JSON,
            GROUND_TRUTH_JSON,
            "scorecard.txt",
            "scorecard_weights.csv",
            "scorecard_lookup.csv",
            "predictions.csv",
            "thresholds.csv",
            "groups.csv",
        ] {
            let p = self.path(name);
            if p.is_file() {
                files.insert(name.to_string(), sha256_file(&p)?);
            }
        }
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config.sha256()?,
            seeds: BTreeMap::from([
                ("split".to_string(), self.config.split_seed),
                ("selection".to_string(), self.config.selection.seed),
                ("cv".to_string(), self.config.cv_seed),
            ]),
            stages,
            files,
        };
        json::write(&self.path(MANIFEST_JSON), &manifest)?;
        Ok(manifest)
    }
}

/// Runs the stages named in the config (all by default).
pub fn run(config: RunConfig, dir: impl Into<PathBuf>) -> Result<Manifest> {
    let stages = match &config.stages {
        Some(s) => parse_stages(s)?,
        None => Stage::ALL.to_vec(),
    };
    Run::new(config, dir)?.execute(&stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_parse() {
        let s = parse_stages(&["evaluate-only".into()]).unwrap();
        assert_eq!(s, vec![Stage::Evaluation]);
        let s = parse_stages(&["fit".into(), "select".into()]).unwrap();
        assert_eq!(
            s,
            vec![Stage::Split, Stage::AlphaCv, Stage::Selection, Stage::Fit]
        );
        assert_eq!(parse_stages(&["all".into()]).unwrap().len(), 6);
        assert!(parse_stages(&["bogus".into()]).is_err());
    }

    #[test]
    fn config_requires_seeds() {
        let text = r#"{"synthetic": {"scenario": "default", "n": 300, "seed": 1},
                       "selection": {"n_bootstrap": 2}, "split_seed": 1, "cv_seed": 2}"#;
        let e = serde_json::from_str::<RunConfig>(text)
            .unwrap_err()
            .to_string();
        assert!(e.contains("seed"), "{e}");
        let text = r#"{"synthetic": {"scenario": "default", "n": 300, "seed": 1},
                       "selection": {"n_bootstrap": 2, "seed": 3}, "split_seed": 1, "cv_seed": 2}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.alpha_grid.len(), 6);
    }
}
