//! Pairwise scoring of a dataset against its ground truth.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use synthsim_metrics::{Digest, Metric, MetricError};
use thiserror::Error;

use crate::generator::{ground_truth_matrix, DatasetManifest};
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("binary for sample `{sample}` is missing: {}", path.display())]
    MissingBinary { sample: String, path: PathBuf },
    #[error("metric `{0}` has no scored pairs")]
    NoScores(String),
    #[error("no column named `{0}`")]
    UnknownColumn(String),
    #[error("a column named `{0}` already exists")]
    DuplicateColumn(String),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("{}: row {row}: {reason}", path.display())]
    BadScoreRow { path: PathBuf, row: usize, reason: String },
    #[error("{}: {reason}", path.display())]
    BadScoreFile { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One metric's output for one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    Value(f64),
    Error,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::Error => None,
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Value(v) => s.serialize_f64(*v),
            Score::Error => s.serialize_str("error"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairRow {
    pub id_a: String,
    pub id_b: String,
    pub ground_truth: f64,
    pub scores: BTreeMap<String, Score>,
}

/// One row per unordered pair with `id_a < id_b`, rows in id order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PairScoreTable {
    /// Column names in the order they were added.
    pub columns: Vec<String>,
    pub rows: Vec<PairRow>,
}

impl PairScoreTable {
    /// Rows with ground truth and no score columns yet.
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self, EvalError> {
        let rows = ground_truth_matrix(manifest)?
            .into_iter()
            .map(|(id_a, id_b, ground_truth)| PairRow {
                id_a,
                id_b,
                ground_truth,
                scores: BTreeMap::new(),
            })
            .collect();
        Ok(Self {
            columns: Vec::new(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn add_column(&mut self, name: &str) -> Result<(), EvalError> {
        if self.columns.iter().any(|c| c == name) {
            return Err(EvalError::DuplicateColumn(name.to_owned()));
        }
        self.columns.push(name.to_owned());
        Ok(())
    }

    pub fn error_count(&self, column: &str) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.scores.get(column), Some(Score::Error)))
            .count()
    }
}

fn digests(metric: &Metric, blobs: &[Vec<u8>]) -> Vec<Result<Digest, MetricError>> {
    blobs.par_iter().map(|b| metric.digest(b)).collect()
}

/// Scores every pair of the dataset with every metric. A metric that cannot
/// handle an input records `Score::Error` for every pair involving it.
pub fn score_pairs(manifest: &DatasetManifest, dataset_dir: &Path, metrics: &[Metric]) -> Result<PairScoreTable, EvalError> {
    let mut table = PairScoreTable::from_manifest(manifest)?;
    let mut index = BTreeMap::new();
    let mut blobs = Vec::with_capacity(manifest.samples.len());
    for sample in &manifest.samples {
        let path = dataset_dir.join(&sample.binary);
        let bytes = fs::read(&path).map_err(|_| EvalError::MissingBinary {
            sample: sample.id.clone(),
            path: path.clone(),
        })?;
        index.insert(sample.id.as_str(), blobs.len());
        blobs.push(bytes);
    }

    for metric in metrics {
        let name = metric.name();
        table.add_column(name)?;
        let digests = digests(metric, &blobs);
        for (i, d) in digests.iter().enumerate() {
            if let Err(e) = d {
                log::warn!("{name}: sample {} not scorable: {e}", manifest.samples[i].id);
            }
        }
        let scores: Vec<Score> = table
            .rows
            .par_iter()
            .map(|row| {
                let (a, b) = (&digests[index[row.id_a.as_str()]], &digests[index[row.id_b.as_str()]]);
                match (a, b) {
                    (Ok(a), Ok(b)) => metric.compare(a, b).map_or(Score::Error, |s| Score::Value(s.value())),
                    _ => Score::Error,
                }
            })
            .collect();
        for (row, score) in table.rows.iter_mut().zip(scores) {
            row.scores.insert(name.to_owned(), score);
        }
    }
    Ok(table)
}

/// Mean of `|score - ground truth|` over the rows the column scored.
pub fn mean_absolute_error(table: &PairScoreTable, column: &str) -> Result<f64, EvalError> {
    if !table.columns.iter().any(|c| c == column) {
        return Err(EvalError::UnknownColumn(column.to_owned()));
    }
    let (sum, n) = table
        .rows
        .iter()
        .filter_map(|r| r.scores.get(column).and_then(|s| s.value()).map(|v| (v - r.ground_truth).abs()))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(EvalError::NoScores(column.to_owned()));
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width bins over `[0, 1]`. Each bin holds `low <= v < high`, the
/// last one also holds 1.0.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>, EvalError> {
    if bins == 0 {
        return Err(EvalError::NoBins);
    }
    let edge = |i: usize| i as f64 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            low: edge(i),
            high: edge(i + 1),
            count: 0,
        })
        .collect();
    for &v in values {
        let mut i = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        // the product can land on either side of an edge
        while i + 1 < bins && v >= edge(i + 1) {
            i += 1;
        }
        while i > 0 && v < edge(i) {
            i -= 1;
        }
        out[i].count += 1;
    }
    Ok(out)
}

pub fn ground_truth_histogram(manifest: &DatasetManifest, bins: usize) -> Result<Vec<HistogramBin>, EvalError> {
    let values: Vec<f64> = ground_truth_matrix(manifest)?.into_iter().map(|(_, _, v)| v).collect();
    histogram(&values, bins)
}

#[derive(Deserialize)]
struct ScoreLine {
    id_a: String,
    id_b: String,
    score: f64,
}

/// Adds a column read from a CSV with header `id_a,id_b,score`. Pairs the
/// file does not mention score `Error`.
pub fn import_external_scores(table: &PairScoreTable, column: &str, path: &Path) -> Result<PairScoreTable, EvalError> {
    let mut out = table.clone();
    out.add_column(column)?;
    let file_err = |reason: String| EvalError::BadScoreFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| file_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| file_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id_a", "id_b", "score"] {
        return Err(file_err("header must be `id_a,id_b,score`".into()));
    }

    let ids: HashSet<&str> = table.rows.iter().flat_map(|r| [r.id_a.as_str(), r.id_b.as_str()]).collect();
    let positions: BTreeMap<(&str, &str), usize> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.id_a.as_str(), r.id_b.as_str()), i))
        .collect();
    let mut values: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, record) in reader.deserialize::<ScoreLine>().enumerate() {
        // header is row 1
        let row = i + 2;
        let bad = |reason: String| EvalError::BadScoreRow {
            path: path.to_path_buf(),
            row,
            reason,
        };
        let line = record.map_err(|e| bad(e.to_string()))?;
        if !(0.0..=1.0).contains(&line.score) {
            return Err(bad(format!("score {} outside [0, 1]", line.score)));
        }
        for id in [&line.id_a, &line.id_b] {
            if !ids.contains(id.as_str()) {
                return Err(bad(format!("unknown sample id `{id}`")));
            }
        }
        let key = if line.id_a <= line.id_b {
            (line.id_a.as_str(), line.id_b.as_str())
        } else {
            (line.id_b.as_str(), line.id_a.as_str())
        };
        let pos = *positions
            .get(&key)
            .ok_or_else(|| bad(format!("`{}` and `{}` do not form a pair", key.0, key.1)))?;
        if values.insert(pos, line.score).is_some() {
            return Err(bad(format!("pair ({}, {}) listed twice", key.0, key.1)));
        }
    }
    for (i, row) in out.rows.iter_mut().enumerate() {
        let score = values.get(&i).map_or(Score::Error, |&v| Score::Value(v));
        row.scores.insert(column.to_owned(), score);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// `None` when the column scored no pair.
    pub mae: BTreeMap<String, Option<f64>>,
    pub errors: BTreeMap<String, usize>,
    pub histogram: Vec<HistogramBin>,
    pub pair_count: usize,
    pub dataset_fingerprint: String,
    /// TLSH distance mapped to similarity 0.
    pub tlsh_max_distance: u32,
}

pub fn dataset_fingerprint(manifest: &DatasetManifest) -> String {
    hex::encode(Sha256::digest(manifest.to_json().as_bytes()))
}

impl EvaluationReport {
    pub fn new(table: &PairScoreTable, manifest: &DatasetManifest, bins: usize) -> Result<Self, EvalError> {
        let mut mae = BTreeMap::new();
        let mut errors = BTreeMap::new();
        for column in &table.columns {
            let value = match mean_absolute_error(table, column) {
                Ok(v) => Some(v),
                Err(EvalError::NoScores(_)) => None,
                Err(e) => return Err(e),
            };
            mae.insert(column.clone(), value);
            errors.insert(column.clone(), table.error_count(column));
        }
        let values: Vec<f64> = table.rows.iter().map(|r| r.ground_truth).collect();
        Ok(Self {
            mae,
            errors,
            histogram: histogram(&values, bins)?,
            pair_count: table.len(),
            dataset_fingerprint: dataset_fingerprint(manifest),
            tlsh_max_distance: synthsim_metrics::tlsh::DEFAULT_MAX_DISTANCE,
        })
    }

    pub fn with_tlsh_max_distance(mut self, d: u32) -> Self {
        self.tlsh_max_distance = d;
        self
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
        text.push('\n');
        text
    }

    /// Columns ordered by MAE, best first; unscored columns last.
    pub fn ranking(&self) -> Vec<(&str, Option<f64>)> {
        let mut rows: Vec<(&str, Option<f64>)> = self.mae.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        rows.sort_by(|a, b| match (a.1, b.1) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(a.0.cmp(b.0)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.0.cmp(b.0),
        });
        rows
    }

    pub fn text_table(&self) -> String {
        let width = self.mae.keys().map(String::len).max().unwrap_or(0).max("metric".len());
        let mut s = String::new();
        writeln!(s, "{:<width$}  {:>8}  {:>7}  {:>7}", "metric", "mae", "scored", "errors").unwrap();
        for (name, mae) in self.ranking() {
            let errors = self.errors.get(name).copied().unwrap_or(0);
            let mae = mae.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
            writeln!(
                s,
                "{name:<width$}  {mae:>8}  {:>7}  {errors:>7}",
                self.pair_count - errors
            )
            .unwrap();
        }
        s
    }
}
