//! Tabular data ingestion, encoding, splitting, and synthesis.
//!
//! The pipeline consumes plain CSV files described by a JSON [`Schema`].
//! [`load_csv`] parses the file into a [`RawTable`] of symbols,
//! [`encode_normalize`] turns it into a numeric [`Dataset`] with every
//! column min-max scaled to `[0, 1]`, and [`tri_split`] performs the
//! 40:40:20 Train1/Train2/Test split used by every experiment.
//! [`synth_biased`] generates seeded synthetic datasets with a
//! controllable amount of group bias for desk-scale runs.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// How a feature column is interpreted during encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// One feature column: its name and kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// The class column and which raw value counts as the favorable outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub favorable: String,
}

/// A protected attribute and the raw values that mark the privileged group.
///
/// Raw values not in `privileged` map to the unprivileged group, so the
/// predicate is total over whatever values the data contains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtectedSpec {
    pub name: String,
    pub privileged: Vec<String>,
}

/// Declares the shape of a CSV dataset: features, class column, and
/// protected attributes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub class: ClassSpec,
    pub protected: Vec<ProtectedSpec>,
}

impl Schema {
    /// Reads a schema from a JSON file and validates it.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_reader(file)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        if self.features.iter().any(|f| f.name == self.class.name) {
            return Err(Error::Schema(format!(
                "class column '{}' must not be listed among features",
                self.class.name
            )));
        }
        for p in &self.protected {
            if self.feature_index(&p.name).is_none() {
                return Err(Error::Schema(format!(
                    "protected attribute '{}' is not a feature",
                    p.name
                )));
            }
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.features.len() {
            return Err(Error::Schema("duplicate feature names".into()));
        }
        Ok(())
    }

    /// Position of a feature by name.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Whether `name` is declared as a protected attribute.
    pub fn is_protected(&self, name: &str) -> bool {
        self.protected.iter().any(|p| p.name == name)
    }

    pub fn protected_spec(&self, name: &str) -> Option<&ProtectedSpec> {
        self.protected.iter().find(|p| p.name == name)
    }
}

/// Parsed CSV rows with values still held as symbols, pending encoding.
#[derive(Debug, Clone)]
pub struct RawTable {
    /// One entry per schema feature, in schema order.
    pub feature_cells: Vec<Vec<String>>,
    /// Raw class values, one per kept row.
    pub class_cells: Vec<String>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.class_cells.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_cells.len()
    }
}

/// Per-row privileged flags for one protected attribute.
#[derive(Debug, Clone)]
pub struct ProtectedTags {
    pub name: String,
    pub privileged: Vec<bool>,
}

/// A rectangular numeric dataset with optional binary labels and per-row
/// group tags for each protected attribute.
///
/// Feature values are post-encoding: every column lies in `[0, 1]` and
/// protected columns hold the privileged flag (1 = privileged).
#[derive(Debug, Clone)]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<u8>>,
    protected: Vec<ProtectedTags>,
}

impl Dataset {
    /// Builds a dataset, checking rectangularity and label invariants.
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<u8>>,
        protected: Vec<ProtectedTags>,
    ) -> Result<Dataset> {
        let width = feature_names.len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Contract("rows are not rectangular".into()));
        }
        if let Some(ref ls) = labels {
            if ls.len() != rows.len() {
                return Err(Error::Contract("label vector length != row count".into()));
            }
            if ls.iter().any(|&l| l > 1) {
                return Err(Error::Contract("labels must be 0 or 1".into()));
            }
        }
        for tags in &protected {
            if tags.privileged.len() != rows.len() {
                return Err(Error::Contract(format!(
                    "group tags for '{}' length != row count",
                    tags.name
                )));
            }
        }
        Ok(Dataset {
            feature_names,
            rows,
            labels,
            protected,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Labels, or a contract error for operations that require them.
    pub fn labels_required(&self) -> Result<&[u8]> {
        self.labels()
            .ok_or_else(|| Error::Contract("operation requires a labeled dataset".into()))
    }

    /// Privileged flags for a protected attribute, by name.
    pub fn group(&self, name: &str) -> Option<&[bool]> {
        self.protected
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.privileged.as_slice())
    }

    pub fn protected_names(&self) -> Vec<&str> {
        self.protected.iter().map(|t| t.name.as_str()).collect()
    }

    /// New dataset from the given row indices (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|ls| indices.iter().map(|&i| ls[i]).collect());
        let protected = self
            .protected
            .iter()
            .map(|t| ProtectedTags {
                name: t.name.clone(),
                privileged: indices.iter().map(|&i| t.privileged[i]).collect(),
            })
            .collect();
        Dataset {
            feature_names: self.feature_names.clone(),
            rows,
            labels,
            protected,
        }
    }

    /// Same rows with the label vector removed.
    pub fn without_labels(&self) -> Dataset {
        let mut ds = self.clone();
        ds.labels = None;
        ds
    }

    /// Same rows with `labels` attached.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        Dataset::new(
            self.feature_names.clone(),
            self.rows.clone(),
            Some(labels),
            self.protected.clone(),
        )
    }

    /// Population standard deviation of each feature column.
    pub fn column_stds(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.n_features())
            .map(|j| {
                let mean = self.rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = self.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }

    /// Median of one feature column.
    pub fn column_median(&self, j: usize) -> f64 {
        let mut vals: Vec<f64> = self.rows.iter().map(|r| r[j]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            vals[n / 2]
        } else {
            (vals[n / 2 - 1] + vals[n / 2]) / 2.0
        }
    }
}

/// The 40:40:20 split. Train2 arrives with its labels stripped; the
/// pipeline recovers them only by querying the black box.
#[derive(Debug, Clone)]
pub struct TriSplit {
    pub train1: Dataset,
    pub train2: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

/// Parses a CSV file against `schema`.
///
/// Rows containing any empty cell are dropped. Extra columns not named by
/// the schema are ignored. Values stay symbolic until
/// [`encode_normalize`].
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    schema.validate()?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let header_pos: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h, i))
        .collect();

    let mut feature_cols = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        let idx = header_pos.get(f.name.as_str()).ok_or_else(|| {
            Error::Schema(format!("header lacks feature column '{}'", f.name))
        })?;
        feature_cols.push(*idx);
    }
    let class_col = *header_pos.get(schema.class.name.as_str()).ok_or_else(|| {
        Error::Schema(format!("header lacks class column '{}'", schema.class.name))
    })?;

    let mut feature_cells: Vec<Vec<String>> = vec![Vec::new(); schema.features.len()];
    let mut class_cells: Vec<String> = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let wanted = feature_cols
            .iter()
            .chain(std::iter::once(&class_col));
        let mut cells = Vec::with_capacity(feature_cols.len() + 1);
        let mut empty = false;
        for &col in wanted {
            match record.get(col) {
                Some(v) if !v.is_empty() => cells.push(v.to_string()),
                _ => {
                    empty = true;
                    break;
                }
            }
        }
        if empty {
            continue; // only non-empty rows are kept
        }
        let class = cells.pop().expect("class cell present");
        for (col, cell) in feature_cells.iter_mut().zip(cells) {
            col.push(cell);
        }
        class_cells.push(class);
    }

    let distinct_classes: Vec<&String> = {
        let mut seen: Vec<&String> = Vec::new();
        for c in &class_cells {
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        seen
    };
    if distinct_classes.len() > 2 {
        return Err(Error::Schema(format!(
            "class column '{}' has {} distinct values; binary required",
            schema.class.name,
            distinct_classes.len()
        )));
    }
    if distinct_classes.len() == 2
        && !distinct_classes.iter().any(|c| **c == schema.class.favorable)
    {
        return Err(Error::Schema(format!(
            "favorable class value '{}' not observed among {:?}",
            schema.class.favorable, distinct_classes
        )));
    }

    Ok(RawTable {
        feature_cells,
        class_cells,
    })
}

/// Encodes a raw table to numbers and min-max normalizes every column.
///
/// Categorical columns are integer-coded by first appearance. Protected
/// columns are encoded straight from their predicate (privileged = 1,
/// unprivileged = 0), which also yields the dataset's group tags. Constant
/// columns map to 0. The class maps to `{0, 1}` with favorable = 1.
pub fn encode_normalize(raw: &RawTable, schema: &Schema) -> Result<Dataset> {
    if raw.n_features() != schema.features.len() {
        return Err(Error::Contract(
            "raw table width does not match schema".into(),
        ));
    }
    let n = raw.n_rows();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(schema.features.len());
    let mut protected: Vec<ProtectedTags> = Vec::new();

    for (f, cells) in schema.features.iter().zip(&raw.feature_cells) {
        if let Some(spec) = schema.protected_spec(&f.name) {
            let flags: Vec<bool> = cells
                .iter()
                .map(|v| spec.privileged.iter().any(|p| p == v))
                .collect();
            columns.push(flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
            protected.push(ProtectedTags {
                name: f.name.clone(),
                privileged: flags,
            });
            continue;
        }
        let col = match f.kind {
            FeatureKind::Numeric => {
                let mut out = Vec::with_capacity(n);
                for (i, v) in cells.iter().enumerate() {
                    let x: f64 = v.parse().map_err(|_| {
                        Error::Schema(format!(
                            "feature '{}', row {}: '{}' is not numeric",
                            f.name,
                            i + 1,
                            v
                        ))
                    })?;
                    out.push(x);
                }
                out
            }
            FeatureKind::Categorical => {
                let mut codes: HashMap<&str, f64> = HashMap::new();
                let mut next = 0.0;
                cells
                    .iter()
                    .map(|v| {
                        *codes.entry(v.as_str()).or_insert_with(|| {
                            let c = next;
                            next += 1.0;
                            c
                        })
                    })
                    .collect()
            }
        };
        columns.push(min_max(&col));
    }

    let labels: Vec<u8> = raw
        .class_cells
        .iter()
        .map(|v| u8::from(*v == schema.class.favorable))
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    let names = schema.features.iter().map(|f| f.name.clone()).collect();
    Dataset::new(names, rows, Some(labels), protected)
}

/// Min-max scales a column to `[0, 1]`; constant columns map to 0.
pub fn min_max(col: &[f64]) -> Vec<f64> {
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 || range.is_nan() {
        return vec![0.0; col.len()];
    }
    col.iter().map(|&v| (v - lo) / range).collect()
}

/// Shuffles with the seeded RNG and cuts 40:40:20.
///
/// Train2's labels are stripped: the audit must win them back from the
/// black box, one query per cluster leaf.
pub fn tri_split(ds: &Dataset, seed: u64) -> Result<TriSplit> {
    ds.labels_required()?;
    let n = ds.n_rows();
    if n < 5 {
        return Err(Error::Size(format!("tri_split needs >= 5 rows, got {n}")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, 0);
    indices.shuffle(&mut r);

    let n1 = ((n as f64) * 0.4).round() as usize;
    let n2 = ((n as f64) * 0.4).round() as usize;
    let (a, rest) = indices.split_at(n1);
    let (b, c) = rest.split_at(n2);

    Ok(TriSplit {
        train1: ds.select(a),
        train2: ds.select(b).without_labels(),
        test: ds.select(c),
        seed,
    })
}

/// Generates a seeded synthetic dataset with one binary protected
/// attribute and a tunable amount of group bias.
///
/// Features, in order: `legit` (continuous, drives the label), noise
/// features `f1..f3` on five interior levels {0.1, 0.3, .., 0.9} (the
/// texture ordinal encoding gives real tabular data), and `protected`
/// (privileged = 1, drawn 50/50). The label is favorable iff
/// `legit >= 0.5`, except that unprivileged rows are forced to the
/// unfavorable class with probability `bias_strength`; the final label is
/// flipped with probability `noise`.
pub fn synth_biased(
    n: usize,
    bias_strength: f64,
    noise: f64,
    seed: u64,
) -> Result<(Dataset, Schema)> {
    if n < 50 {
        return Err(Error::Size(format!("synth_biased needs n >= 50, got {n}")));
    }
    if !(0.0..=1.0).contains(&bias_strength) || !(0.0..=1.0).contains(&noise) {
        return Err(Error::Contract(
            "bias_strength and noise must lie in [0, 1]".into(),
        ));
    }
    let mut r = rng::stream(seed, 0);
    let levels = |u: f64| ((u * 5.0).floor().min(4.0) + 0.5) / 5.0;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let privileged = r.gen_bool(0.5);
        let legit: f64 = r.gen();
        let noise_feats: [f64; 3] = [levels(r.gen()), levels(r.gen()), levels(r.gen())];
        let mut label = u8::from(legit >= 0.5);
        if !privileged && r.gen_bool(bias_strength) {
            label = 0;
        }
        if noise > 0.0 && r.gen_bool(noise) {
            label = 1 - label;
        }
        rows.push(vec![
            legit,
            noise_feats[0],
            noise_feats[1],
            noise_feats[2],
            if privileged { 1.0 } else { 0.0 },
        ]);
        labels.push(label);
        flags.push(privileged);
    }
    let names = vec![
        "legit".to_string(),
        "f1".to_string(),
        "f2".to_string(),
        "f3".to_string(),
        "protected".to_string(),
    ];
    let schema = Schema {
        features: names
            .iter()
            .map(|n| FeatureSpec {
                name: n.clone(),
                kind: FeatureKind::Numeric,
            })
            .collect(),
        class: ClassSpec {
            name: "label".into(),
            favorable: "1".into(),
        },
        protected: vec![ProtectedSpec {
            name: "protected".into(),
            privileged: vec!["1".into()],
        }],
    };
    let ds = Dataset::new(
        names,
        rows,
        Some(labels),
        vec![ProtectedTags {
            name: "protected".into(),
            privileged: flags,
        }],
    )?;
    Ok((ds, schema))
}

/// Writes a dataset back out as CSV (features then class column).
pub fn write_csv(ds: &Dataset, schema: &Schema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let labels = ds.labels_required()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut header: Vec<&str> = ds.feature_names().iter().map(|s| s.as_str()).collect();
    header.push(&schema.class.name);
    w.write_record(&header).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    for (i, row) in ds.rows().iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
        rec.push(if labels[i] == 1 {
            schema.class.favorable.clone()
        } else {
            "0".to_string()
        });
        w.write_record(&rec).map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn format_cell(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}
