//! Household survey records: CSV ingestion, validation and train/test splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// A candidate survey question with its ordered response levels.
///
/// The first declared level is the reference level used by dummy coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: String,
    #[serde(default)]
    pub prompt: String,
    pub levels: Vec<String>,
}

impl QuestionSpec {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        levels: Vec<String>,
    ) -> Result<Self> {
        let q = QuestionSpec {
            id: id.into(),
            prompt: prompt.into(),
            levels,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::Schema(format!(
                "question `{}` declares {} level(s); at least 2 are required",
                self.id,
                self.levels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &self.levels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Schema(format!(
                    "question `{}` declares level `{}` twice",
                    self.id, l
                )));
            }
        }
        Ok(())
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

/// One household. Region and responses are indices into the owning
/// dataset's `regions` and `questions[q].levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdRecord {
    pub id: String,
    pub weight: f64,
    pub region: usize,
    pub poverty: u8,
    pub responses: Vec<u16>,
    pub consumption: Option<f64>,
    pub urban: Option<bool>,
}

/// Label-level view of a household: region id plus question → level label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub region: String,
    pub responses: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub records: Vec<HouseholdRecord>,
    pub regions: Vec<String>,
    pub questions: Vec<QuestionSpec>,
    pub poverty_line_label: String,
}

impl SurveyDataset {
    /// Builds a dataset and checks every record invariant.
    pub fn new(
        records: Vec<HouseholdRecord>,
        regions: Vec<String>,
        questions: Vec<QuestionSpec>,
        poverty_line_label: impl Into<String>,
    ) -> Result<Self> {
        let ds = SurveyDataset {
            records,
            regions,
            questions,
            poverty_line_label: poverty_line_label.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Schema("dataset declares no regions".into()));
        }
        let mut region_seen = HashSet::new();
        for r in &self.regions {
            if !region_seen.insert(r.as_str()) {
                return Err(Error::Schema(format!("region `{r}` declared twice")));
            }
        }
        let mut qids = HashSet::new();
        for q in &self.questions {
            q.validate()?;
            if !qids.insert(q.id.as_str()) {
                return Err(Error::Schema(format!("question `{}` declared twice", q.id)));
            }
        }
        for (i, rec) in self.records.iter().enumerate() {
            let row = i + 1;
            if !(rec.weight.is_finite() && rec.weight > 0.0) {
                return Err(Error::Row {
                    row,
                    message: format!("weight must be positive and finite, got {}", rec.weight),
                });
            }
            if rec.poverty > 1 {
                return Err(Error::Row {
                    row,
                    message: format!("poverty label must be 0 or 1, got {}", rec.poverty),
                });
            }
            if rec.region >= self.regions.len() {
                return Err(Error::Row {
                    row,
                    message: format!("region index {} is undeclared", rec.region),
                });
            }
            if rec.responses.len() != self.questions.len() {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "expected {} responses, got {}",
                        self.questions.len(),
                        rec.responses.len()
                    ),
                });
            }
            for (q, &lvl) in self.questions.iter().zip(&rec.responses) {
                if lvl as usize >= q.levels.len() {
                    return Err(Error::Row {
                        row,
                        message: format!("level index {lvl} undeclared for question `{}`", q.id),
                    });
                }
            }
            if let Some(c) = rec.consumption {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Row {
                        row,
                        message: format!("consumption must be nonnegative, got {c}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.questions.iter().position(|q| q.id == id)
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == id)
    }

    pub fn profile(&self, i: usize) -> Profile {
        let rec = &self.records[i];
        Profile {
            region: self.regions[rec.region].clone(),
            responses: self
                .questions
                .iter()
                .zip(&rec.responses)
                .map(|(q, &l)| (q.id.clone(), q.levels[l as usize].clone()))
                .collect(),
        }
    }

    /// New dataset holding the given records (by position, duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> SurveyDataset {
        SurveyDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            regions: self.regions.clone(),
            questions: self.questions.clone(),
            poverty_line_label: self.poverty_line_label.clone(),
        }
    }

    /// Positions of records ordered by id; used wherever sampling must not
    /// depend on file row order.
    pub fn positions_by_id(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.records[a].id.cmp(&self.records[b].id));
        idx
    }

    pub fn weighted_poverty_rate(&self) -> f64 {
        let (num, den) = self.records.iter().fold((0.0, 0.0), |(n, d), r| {
            (n + r.weight * r.poverty as f64, d + r.weight)
        });
        num / den
    }

    pub fn has_both_classes(&self) -> bool {
        let poor = self.records.iter().filter(|r| r.poverty == 1).count();
        poor > 0 && poor < self.len()
    }
}

/// One question column in the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionColumn {
    pub column: String,
    /// Defaults to the column name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub prompt: String,
    /// Declared levels; when absent, the sorted distinct values in the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// Maps CSV columns to survey roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub weight: String,
    pub region: String,
    pub poverty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urban: Option<String>,
    pub questions: Vec<QuestionColumn>,
    /// Declared region order; when absent, order of first appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<String>>,
    #[serde(default = "default_poverty_line")]
    pub poverty_line_label: String,
}

fn default_poverty_line() -> String {
    "poverty line".to_string()
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Schema> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

fn parse_urban(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "urban" | "yes" => Some(true),
        "0" | "false" | "rural" | "no" => Some(false),
        _ => None,
    }
}

/// Reads a CSV file according to `schema`; row order is preserved.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<SurveyDataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f), schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &Schema) -> Result<SurveyDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in CSV header")))
    };
    let id_col = schema.id.as_deref().map(col).transpose()?;
    let weight_col = col(&schema.weight)?;
    let region_col = col(&schema.region)?;
    let poverty_col = col(&schema.poverty)?;
    let consumption_col = schema.consumption.as_deref().map(col).transpose()?;
    let urban_col = schema.urban.as_deref().map(col).transpose()?;
    let question_cols = schema
        .questions
        .iter()
        .map(|q| col(&q.column))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;

    let mut questions = Vec::with_capacity(schema.questions.len());
    for (qc, &ci) in schema.questions.iter().zip(&question_cols) {
        let levels = match &qc.levels {
            Some(l) => l.clone(),
            None => {
                let mut distinct: Vec<String> = rows
                    .iter()
                    .map(|r| r.get(ci).unwrap_or("").trim().to_string())
                    .collect::<HashSet<_>>()
                    .into_iter()
                    .collect();
                distinct.sort();
                distinct
            }
        };
        questions.push(QuestionSpec::new(
            qc.id.clone().unwrap_or_else(|| qc.column.clone()),
            qc.prompt.clone(),
            levels,
        )?);
    }
    let level_maps: Vec<HashMap<&str, u16>> = questions
        .iter()
        .map(|q| {
            q.levels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i as u16))
                .collect()
        })
        .collect();

    let mut regions: Vec<String> = schema.regions.clone().unwrap_or_default();
    let regions_declared = schema.regions.is_some();
    let mut region_map: HashMap<String, usize> = regions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), i))
        .collect();

    let mut records = Vec::with_capacity(rows.len());
    let mut ids = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let field = |c: usize| r.get(c).unwrap_or("").trim();
        let err = |message: String| Error::Row { row, message };

        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => format!("{row:08}"),
        };
        if !ids.insert(id.clone()) {
            return Err(err(format!("duplicate household id `{id}`")));
        }
        let weight: f64 = field(weight_col)
            .parse()
            .map_err(|_| err(format!("weight `{}` is not a number", field(weight_col))))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(err(format!(
                "weight must be positive and finite, got {weight}"
            )));
        }
        let poverty = match field(poverty_col) {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(err(format!("poverty label must be 0 or 1, got `{other}`"))),
        };
        let region_label = field(region_col);
        let region = match region_map.get(region_label) {
            Some(&ix) => ix,
            None if !regions_declared && !region_label.is_empty() => {
                regions.push(region_label.to_string());
                region_map.insert(region_label.to_string(), regions.len() - 1);
                regions.len() - 1
            }
            None => return Err(err(format!("unknown region `{region_label}`"))),
        };
        let mut responses = Vec::with_capacity(questions.len());
        for ((q, &ci), map) in questions.iter().zip(&question_cols).zip(&level_maps) {
            let v = field(ci);
            match map.get(v) {
                Some(&l) => responses.push(l),
                None if v.is_empty() => {
                    return Err(err(format!("missing response for question `{}`", q.id)))
                }
                None => return Err(err(format!("unknown level `{v}` for question `{}`", q.id))),
            }
        }
        let consumption = match consumption_col {
            Some(c) if !field(c).is_empty() => {
                let v: f64 = field(c)
                    .parse()
                    .map_err(|_| err(format!("consumption `{}` is not a number", field(c))))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err(format!("consumption must be nonnegative, got {v}")));
                }
                Some(v)
            }
            _ => None,
        };
        let urban = match urban_col {
            Some(c) if !field(c).is_empty() => Some(
                parse_urban(field(c))
                    .ok_or_else(|| err(format!("urban flag `{}` not recognised", field(c))))?,
            ),
            _ => None,
        };
        records.push(HouseholdRecord {
            id,
            weight,
            region,
            poverty,
            responses,
            consumption,
            urban,
        });
    }
    SurveyDataset::new(
        records,
        regions,
        questions,
        schema.poverty_line_label.clone(),
    )
}

/// Writes `dataset` as CSV and returns the matching schema.
pub fn write_dataset<W: Write>(dataset: &SurveyDataset, writer: W) -> Result<Schema> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "id".to_string(),
        "weight".into(),
        "region".into(),
        "poor".into(),
        "consumption".into(),
        "urban".into(),
    ];
    header.extend(dataset.questions.iter().map(|q| q.id.clone()));
    w.write_record(&header)?;
    for rec in &dataset.records {
        let mut row = vec![
            rec.id.clone(),
            format!("{:?}", rec.weight),
            dataset.regions[rec.region].clone(),
            rec.poverty.to_string(),
            rec.consumption
                .map(|c| format!("{c:?}"))
                .unwrap_or_default(),
            rec.urban.map(|u| (u as u8).to_string()).unwrap_or_default(),
        ];
        row.extend(
            dataset
                .questions
                .iter()
                .zip(&rec.responses)
                .map(|(q, &l)| q.levels[l as usize].clone()),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(Schema {
        id: Some("id".into()),
        weight: "weight".into(),
        region: "region".into(),
        poverty: "poor".into(),
        consumption: Some("consumption".into()),
        urban: Some("urban".into()),
        questions: dataset
            .questions
            .iter()
            .map(|q| QuestionColumn {
                column: q.id.clone(),
                id: None,
                prompt: q.prompt.clone(),
                levels: Some(q.levels.clone()),
            })
            .collect(),
        regions: Some(dataset.regions.clone()),
        poverty_line_label: dataset.poverty_line_label.clone(),
    })
}

/// Record positions of a random 2:1 split; each part keeps file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 3 {
        return Err(Error::Validation(format!(
            "train/test split needs at least 3 records, got {n}"
        )));
    }
    let n_train = (2.0 * n as f64 / 3.0).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed, "split", 0));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Simple random 2:1 partition: |train| = round(2n/3).
pub fn split_train_test(
    dataset: &SurveyDataset,
    seed: u64,
) -> Result<(SurveyDataset, SurveyDataset)> {
    let s = split_indices(dataset.len(), seed)?;
    Ok((dataset.subset(&s.train), dataset.subset(&s.test)))
}
