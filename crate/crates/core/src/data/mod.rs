//! Tabular ingestion: CSV parsing, schema inference, encoding of the feature
//! matrix and the protected attribute, and export of reconstructions.

mod schema;
mod split;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

pub use schema::{Column, ColumnKind, KindOverride, Schema, MISSING_LEVEL};
pub use split::{split_rows, Split};

use crate::error::{Error, Result};
use schema::{format_number, is_missing, parse_number};

/// How the protected column becomes an adversary target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtectedMode {
    /// Categorical targets. A numeric column with more than `bins` distinct
    /// values is cut into `bins` quantile classes.
    Classify { bins: usize },
    /// Numeric target for a regression adversary.
    Regression,
}

impl Default for ProtectedMode {
    fn default() -> Self {
        ProtectedMode::Classify { bins: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Protected {
    Classes {
        labels: Vec<usize>,
        names: Vec<String>,
    },
    /// z-scored values.
    Continuous { values: Vec<f64> },
}

impl Protected {
    pub fn len(&self) -> usize {
        match self {
            Protected::Classes { labels, .. } => labels.len(),
            Protected::Continuous { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Protected::Classes { labels, .. } => Some(labels),
            Protected::Continuous { .. } => None,
        }
    }

    /// Number of classes, or 1 for a continuous target.
    pub fn n_classes(&self) -> usize {
        match self {
            Protected::Classes { names, .. } => names.len(),
            Protected::Continuous { .. } => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Protected::Classes { .. })
    }

    /// Restrict to the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Protected {
        match self {
            Protected::Classes { labels, names } => Protected::Classes {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                names: names.clone(),
            },
            Protected::Continuous { values } => Protected::Continuous {
                values: rows.iter().map(|&i| values[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub overrides: Vec<(String, KindOverride)>,
    pub mode: ProtectedMode,
    pub validation_fraction: f64,
    pub split_seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            overrides: Vec::new(),
            mode: ProtectedMode::default(),
            validation_fraction: 0.3,
            split_seed: 0,
        }
    }
}

/// Encoded dataset: features `x` (protected column excluded), the protected
/// target, the schema and a train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub protected: Protected,
    pub schema: Schema,
    pub split: Split,
    /// Source rows that survived ingestion, all columns, as strings.
    pub rows: Vec<Vec<String>>,
    /// Rows removed because the protected value was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    /// Build from an in-memory table.
    pub fn from_table(
        header: Vec<String>,
        rows: Vec<Vec<String>>,
        protected_name: &str,
        options: &LoadOptions,
    ) -> Result<Dataset> {
        let protected = header
            .iter()
            .position(|h| h == protected_name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "protected column '{protected_name}' not found (columns: {})",
                    header.join(", ")
                ))
            })?;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != header.len() {
                return Err(Error::Data(format!(
                    "row {} has {} cells, header has {}",
                    i + 1,
                    r.len(),
                    header.len()
                )));
            }
        }
        let before = rows.len();
        let rows: Vec<Vec<String>> = rows
            .into_iter()
            .filter(|r| !is_missing(&r[protected]))
            .collect();
        let dropped_rows = before - rows.len();
        if dropped_rows > 0 {
            log::warn!("dropped {dropped_rows} rows with a missing '{protected_name}' value");
        }
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "{} usable rows; at least 2 are required",
                rows.len()
            )));
        }
        let schema = Schema::infer(&header, &rows, protected, &options.overrides)?;
        let x = schema.encode(&rows)?;
        let cells: Vec<&str> = rows.iter().map(|r| r[protected].as_str()).collect();
        let protected = encode_protected(&schema.columns[protected], &cells, options.mode)?;
        let split = split_rows(
            rows.len(),
            protected.labels(),
            options.validation_fraction,
            options.split_seed,
        )?;
        Ok(Dataset {
            x,
            protected,
            schema,
            split,
            rows,
            dropped_rows,
        })
    }

    /// Replace the split with a fresh seeded one.
    pub fn resplit(mut self, validation_fraction: f64, seed: u64) -> Result<Dataset> {
        self.split = split_rows(
            self.n_rows(),
            self.protected.labels(),
            validation_fraction,
            seed,
        )?;
        Ok(self)
    }

    /// Raw protected cells, for reattaching to a decoded table.
    pub fn protected_cells(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r[self.schema.protected].clone())
            .collect()
    }

    /// Hash of the protected target and split: identifies the rows an audit
    /// was run against, independent of the feature values.
    pub fn fingerprint(&self) -> String {
        target_fingerprint(&self.protected, &self.split)
    }

    /// Decode a reconstruction into a table in source column order.
    pub fn decode(&self, y: ArrayView2<f64>, reattach_protected: bool) -> Result<Table> {
        let cells = reattach_protected.then(|| self.protected_cells());
        Ok(Table {
            header: self.schema.decoded_header(reattach_protected),
            rows: self.schema.decode(y, cells.as_deref())?,
        })
    }
}

pub fn target_fingerprint(protected: &Protected, split: &Split) -> String {
    let mut h = Sha256::new();
    match protected {
        Protected::Classes { labels, names } => {
            h.update(b"classes");
            h.update((names.len() as u64).to_le_bytes());
            for &l in labels {
                h.update((l as u64).to_le_bytes());
            }
        }
        Protected::Continuous { values } => {
            h.update(b"continuous");
            for v in values {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    h.update(b"train");
    for &i in &split.train {
        h.update((i as u64).to_le_bytes());
    }
    h.update(b"validation");
    for &i in &split.validation {
        h.update((i as u64).to_le_bytes());
    }
    crate::hex(&h.finalize()[..16])
}

fn encode_protected(column: &Column, cells: &[&str], mode: ProtectedMode) -> Result<Protected> {
    let name = &column.name;
    let numeric: Option<Vec<f64>> = match column.kind {
        ColumnKind::Categorical { .. } => None,
        _ => cells.iter().map(|c| parse_number(c)).collect(),
    };
    match (mode, numeric) {
        (ProtectedMode::Regression, None) => Err(Error::Config(format!(
            "regression adversary needs a numeric protected column; '{name}' is categorical"
        ))),
        (ProtectedMode::Regression, Some(values)) => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std == 0.0 {
                return Err(Error::Data(format!(
                    "protected column '{name}' is constant"
                )));
            }
            Ok(Protected::Continuous {
                values: values.iter().map(|v| (v - mean) / std).collect(),
            })
        }
        (ProtectedMode::Classify { .. }, None) => {
            let mut names: Vec<String> = Vec::new();
            let labels = cells
                .iter()
                .map(|c| {
                    let c = c.trim();
                    match names.iter().position(|n| n == c) {
                        Some(p) => p,
                        None => {
                            names.push(c.to_string());
                            names.len() - 1
                        }
                    }
                })
                .collect();
            Ok(Protected::Classes { labels, names })
        }
        (ProtectedMode::Classify { bins }, Some(values)) => {
            if bins < 2 {
                return Err(Error::Config(format!(
                    "bin count must be at least 2, got {bins}"
                )));
            }
            let mut distinct = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() <= bins {
                let labels = values
                    .iter()
                    .map(|v| distinct.iter().position(|d| d == v).unwrap())
                    .collect();
                let names = distinct.iter().map(|&d| format_number(d)).collect();
                return Ok(Protected::Classes { labels, names });
            }
            Ok(quantile_bins(&values, bins))
        }
    }
}

/// Cut into `bins` classes at the empirical quantiles; empty bins (from
/// ties) are removed.
fn quantile_bins(values: &[f64], bins: usize) -> Protected {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins)
        .map(|k| sorted[(k * n / bins).min(n - 1)])
        .collect();
    edges.dedup();
    // class = number of edges <= v
    let raw: Vec<usize> = values
        .iter()
        .map(|v| edges.iter().filter(|&&e| e <= *v).count())
        .collect();
    let mut used: Vec<usize> = raw.clone();
    used.sort_unstable();
    used.dedup();
    let labels = raw
        .iter()
        .map(|r| used.iter().position(|u| u == r).unwrap())
        .collect();
    let names = used
        .iter()
        .map(|&b| {
            let lo = if b == 0 {
                f64::NEG_INFINITY
            } else {
                edges[b - 1]
            };
            let hi = if b == edges.len() {
                f64::INFINITY
            } else {
                edges[b]
            };
            format!("[{lo},{hi})")
        })
        .collect();
    Protected::Classes { labels, names }
}

/// Read a delimited file with a header row.
pub fn read_table(path: &Path, delimiter: u8) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn load_csv(path: &Path, protected_name: &str, options: &LoadOptions) -> Result<Dataset> {
    let (header, rows) = read_table(path, options.delimiter)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    Dataset::from_table(header, rows, protected_name, options)
}

/// A decoded table: header plus string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// UTF-8, LF line endings.
    pub fn write_csv(&self, path: &Path, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Data(format!("{other:?}")),
            })?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Debiased reconstruction of a dataset.
#[derive(Debug, Clone)]
pub struct DebiasedOutput {
    pub y: Array2<f64>,
    pub table: Table,
    pub config_hash: String,
    pub seed: u64,
}
