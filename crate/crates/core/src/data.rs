use std::collections::BTreeSet;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{validate_features, FeatureKind, FeatureMeta, Mutability, Value};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema file: {0}")]
    Json(#[from] serde_json::Error),
}

fn at(line: usize, message: impl Into<String>) -> DataError {
    DataError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFeature {
    pub name: String,
    pub kind: SchemaKind,
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    pub mutability: Mutability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Categorical,
    Numerical,
}

/// Declares feature kinds and mutability plus the label column.
///
/// For CSV input, features and the label are looked up by header name. For
/// LibSVM input, feature `i` of the schema is LibSVM index `i + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    pub features: Vec<SchemaFeature>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    fn feature_meta(&self) -> Result<Vec<FeatureMeta>, DataError> {
        let metas = self
            .features
            .iter()
            .map(|f| {
                let kind = match (f.kind, &f.categories) {
                    (SchemaKind::Numerical, None) => FeatureKind::Numerical,
                    (SchemaKind::Categorical, Some(c)) => FeatureKind::Categorical(c.clone()),
                    (SchemaKind::Numerical, Some(_)) => {
                        return Err(DataError::Schema(format!("numerical feature `{}` lists categories", f.name)))
                    }
                    (SchemaKind::Categorical, None) => {
                        return Err(DataError::Schema(format!("categorical feature `{}` has no categories", f.name)))
                    }
                };
                Ok(FeatureMeta {
                    name: f.name.clone(),
                    kind,
                    mutability: f.mutability,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        validate_features(&metas).map_err(|e| DataError::Schema(e.to_string()))?;
        Ok(metas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<FeatureMeta>,
    pub classes: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Deterministic shuffle-and-split into `(train, test)` with `n_train`
    /// training rows.
    pub fn split(&self, n_train: usize, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = n_train.min(self.len());
        let pick = |ids: &[usize]| Dataset {
            features: self.features.clone(),
            classes: self.classes.clone(),
            rows: ids.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
        };
        (pick(&idx[..n_train]), pick(&idx[n_train..]))
    }

    /// Label share of the most frequent class.
    pub fn majority_rate(&self) -> f64 {
        let mut counts = vec![0usize; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts.into_iter().max().unwrap_or(0) as f64 / self.len().max(1) as f64
    }
}

pub fn read_dataset<R: Read>(reader: R, format: InputFormat, schema: &Schema) -> Result<Dataset, DataError> {
    match format {
        InputFormat::Csv => read_csv(reader, schema),
        InputFormat::Libsvm => read_libsvm(reader, schema),
    }
}

fn finish(
    features: Vec<FeatureMeta>,
    schema: &Schema,
    rows: Vec<Vec<Value>>,
    raw_labels: Vec<(usize, String)>,
) -> Result<Dataset, DataError> {
    let classes = match &schema.classes {
        Some(c) => c.clone(),
        None => raw_labels
            .iter()
            .map(|(_, l)| l.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let labels = raw_labels
        .into_iter()
        .map(|(line, l)| {
            classes
                .iter()
                .position(|c| *c == l)
                .ok_or_else(|| at(line, format!("label `{l}` is not a declared class")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        features,
        classes,
        rows,
        labels,
    })
}

fn parse_value(meta: &FeatureMeta, raw: &str, line: usize) -> Result<Value, DataError> {
    let raw = raw.trim();
    match &meta.kind {
        FeatureKind::Categorical(_) => meta
            .category_index(raw)
            .map(Value::Category)
            .ok_or_else(|| at(line, format!("unknown category `{raw}` for feature `{}`", meta.name))),
        FeatureKind::Numerical => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Number)
            .ok_or_else(|| at(line, format!("feature `{}`: `{raw}` is not a finite number", meta.name))),
    }
}

/// Reads a CSV with a header row.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DataError> {
    let features = schema.feature_meta()?;
    let label = schema
        .label
        .as_deref()
        .ok_or_else(|| DataError::Schema("CSV input needs a `label` column".into()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::Schema(format!("column `{name}` not found in header")))
    };
    let feature_cols = features.iter().map(|f| col(&f.name)).collect::<Result<Vec<_>, _>>()?;
    let label_col = col(label)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // The reader's own line counter drifts after long header rows, so
        // count from the record index; quoted multi-line fields are not
        // expected in training data.
        let line = i + 2;
        if record.len() != header.len() {
            return Err(at(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let row = features
            .iter()
            .zip(&feature_cols)
            .map(|(meta, &c)| parse_value(meta, &record[c], line))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        labels.push((line, record[label_col].trim().to_string()));
    }
    finish(features, schema, rows, labels)
}

/// Reads sparse LibSVM lines `label idx:val ...` (1-based indices, implicit
/// zeros). Every schema feature must be numerical.
pub fn read_libsvm<R: Read>(mut reader: R, schema: &Schema) -> Result<Dataset, DataError> {
    let features = schema.feature_meta()?;
    if features.iter().any(|f| f.kind != FeatureKind::Numerical) {
        return Err(DataError::Schema("LibSVM input supports numerical features only".into()));
    }
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let m = features.len();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.split('#').next().unwrap_or("").trim();
        if raw.is_empty() {
            continue;
        }
        let mut parts = raw.split_whitespace();
        let label = parts.next().expect("nonempty line").to_string();
        let mut row = vec![Value::Number(0.0); m];
        let mut last = 0usize;
        for tok in parts {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| at(line, format!("expected `index:value`, found `{tok}`")))?;
            let idx: usize = idx.parse().map_err(|_| at(line, format!("bad index `{idx}`")))?;
            if idx == 0 || idx > m {
                return Err(at(line, format!("index {idx} outside 1..={m}")));
            }
            if idx <= last {
                return Err(at(line, "indices must be strictly increasing"));
            }
            last = idx;
            row[idx - 1] = parse_value(&features[idx - 1], val, line)?;
        }
        rows.push(row);
        labels.push((line, label));
    }
    finish(features, schema, rows, labels)
}
