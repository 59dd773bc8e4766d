//! Column typing and the numeric encoding used by the networks.
//!
//! Numeric columns are z-scored with the population standard deviation.
//! Categorical columns are one-hot encoded over their levels in order of
//! first appearance. Constant numeric columns carry no information and are
//! left out of the encoding, but are restored on decode.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Level assigned to missing categorical cells.
pub const MISSING_LEVEL: &str = "__missing__";

pub(crate) fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "?" | "NA" | "N/A" | "na" | "n/a" | "NaN" | "nan" | "null" | "NULL"
    )
}

pub(crate) fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindOverride {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numeric {
        mean: f64,
        std: f64,
    },
    Categorical {
        levels: Vec<String>,
    },
    /// Numeric column with zero variance; omitted from the encoding.
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            ColumnKind::Numeric { .. } => 1,
            ColumnKind::Categorical { levels } => levels.len(),
            ColumnKind::Constant { .. } => 0,
        }
    }
}

/// Typing of every column in the source table, in source order. The
/// protected column is kept here for bookkeeping but never encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub protected: usize,
}

impl Schema {
    /// Infer column kinds from string cells. A column is numeric iff every
    /// non-missing cell parses as a number, unless overridden.
    pub fn infer(
        header: &[String],
        rows: &[Vec<String>],
        protected: usize,
        overrides: &[(String, KindOverride)],
    ) -> Result<Schema> {
        if protected >= header.len() {
            return Err(Error::Config("protected column index out of range".into()));
        }
        let mut columns = Vec::with_capacity(header.len());
        for (j, name) in header.iter().enumerate() {
            let cells = rows.iter().map(|r| r[j].as_str());
            let forced = overrides.iter().find(|(n, _)| n == name).map(|(_, k)| *k);
            let numeric = match forced {
                Some(KindOverride::Numeric) => true,
                Some(KindOverride::Categorical) => false,
                None => cells
                    .clone()
                    .filter(|c| !is_missing(c))
                    .all(|c| parse_number(c).is_some()),
            };
            let kind = if numeric {
                let mut values = Vec::new();
                for c in cells.filter(|c| !is_missing(c)) {
                    values.push(parse_number(c).ok_or_else(|| {
                        Error::Data(format!("column '{name}': '{c}' is not a number"))
                    })?);
                }
                numeric_kind(&values)
            } else {
                let mut levels: Vec<String> = Vec::new();
                for c in cells {
                    let level = if is_missing(c) {
                        MISSING_LEVEL
                    } else {
                        c.trim()
                    };
                    if !levels.iter().any(|l| l == level) {
                        levels.push(level.to_string());
                    }
                }
                ColumnKind::Categorical { levels }
            };
            if j != protected {
                if let ColumnKind::Constant { .. } = kind {
                    log::warn!("column '{name}' is constant and is not encoded");
                }
            }
            columns.push(Column {
                name: name.clone(),
                kind,
            });
        }
        Ok(Schema { columns, protected })
    }

    pub fn header(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn protected_name(&self) -> &str {
        &self.columns[self.protected].name
    }

    fn encoded_columns(&self) -> impl Iterator<Item = (usize, &Column)> {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != self.protected)
    }

    pub fn encoded_width(&self) -> usize {
        self.encoded_columns().map(|(_, c)| c.encoded_width()).sum()
    }

    /// Names of the encoded feature columns, `column=level` for one-hot blocks.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.encoded_width());
        for (_, c) in self.encoded_columns() {
            match &c.kind {
                ColumnKind::Numeric { .. } => names.push(c.name.clone()),
                ColumnKind::Categorical { levels } => {
                    names.extend(levels.iter().map(|l| format!("{}={l}", c.name)))
                }
                ColumnKind::Constant { .. } => {}
            }
        }
        names
    }

    /// Encoded column ranges for each source column (empty for the
    /// protected and constant columns).
    pub fn column_spans(&self) -> Vec<std::ops::Range<usize>> {
        let mut offset = 0;
        self.columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let width = if j == self.protected {
                    0
                } else {
                    c.encoded_width()
                };
                let span = offset..offset + width;
                offset += width;
                span
            })
            .collect()
    }

    /// Encode full source rows (protected cell included, and ignored).
    pub fn encode(&self, rows: &[Vec<String>]) -> Result<Array2<f64>> {
        let width = self.encoded_width();
        let mut x = Array2::zeros((rows.len(), width));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::Data(format!(
                    "row {i} has {} cells, schema has {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
            let mut k = 0;
            for (j, col) in self.encoded_columns() {
                let cell = row[j].as_str();
                match &col.kind {
                    ColumnKind::Numeric { mean, std } => {
                        let v = if is_missing(cell) {
                            *mean
                        } else {
                            parse_number(cell).ok_or_else(|| {
                                Error::Data(format!(
                                    "column '{}': '{cell}' is not a number",
                                    col.name
                                ))
                            })?
                        };
                        x[[i, k]] = (v - mean) / std;
                        k += 1;
                    }
                    ColumnKind::Categorical { levels } => {
                        let level = if is_missing(cell) {
                            MISSING_LEVEL
                        } else {
                            cell.trim()
                        };
                        let pos = levels.iter().position(|l| l == level).ok_or_else(|| {
                            Error::Data(format!("column '{}': unseen level '{level}'", col.name))
                        })?;
                        x[[i, k + pos]] = 1.0;
                        k += levels.len();
                    }
                    ColumnKind::Constant { .. } => {}
                }
            }
        }
        Ok(x)
    }

    /// Decode an encoded matrix back into string cells in source column
    /// order. The protected column is omitted unless `protected_cells` is
    /// given, in which case those values are reattached in place.
    pub fn decode(
        &self,
        y: ArrayView2<f64>,
        protected_cells: Option<&[String]>,
    ) -> Result<Vec<Vec<String>>> {
        let width = self.encoded_width();
        if y.ncols() != width {
            return Err(Error::Shape(format!(
                "matrix has {} columns, schema encodes {width}",
                y.ncols()
            )));
        }
        if let Some(p) = protected_cells {
            if p.len() != y.nrows() {
                return Err(Error::Shape(format!(
                    "{} protected cells for {} rows",
                    p.len(),
                    y.nrows()
                )));
            }
        }
        let mut out = Vec::with_capacity(y.nrows());
        for (i, row) in y.rows().into_iter().enumerate() {
            let mut cells = Vec::with_capacity(self.columns.len());
            let mut k = 0;
            for (j, col) in self.columns.iter().enumerate() {
                if j == self.protected {
                    if let Some(p) = protected_cells {
                        cells.push(p[i].clone());
                    }
                    continue;
                }
                match &col.kind {
                    ColumnKind::Numeric { mean, std } => {
                        cells.push(format_number(row[k] * std + mean));
                        k += 1;
                    }
                    ColumnKind::Categorical { levels } => {
                        let block = row.slice(ndarray::s![k..k + levels.len()]);
                        // first maximum wins ties
                        let mut best = 0;
                        for (l, &v) in block.iter().enumerate() {
                            if v > block[best] {
                                best = l;
                            }
                        }
                        cells.push(levels[best].clone());
                        k += levels.len();
                    }
                    ColumnKind::Constant { value } => cells.push(format_number(*value)),
                }
            }
            out.push(cells);
        }
        Ok(out)
    }

    /// Header matching [`Schema::decode`] output.
    pub fn decoded_header(&self, reattach_protected: bool) -> Vec<String> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(j, _)| reattach_protected || *j != self.protected)
            .map(|(_, c)| c.name.clone())
            .collect()
    }
}

fn numeric_kind(values: &[f64]) -> ColumnKind {
    if values.is_empty() {
        return ColumnKind::Constant { value: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 * mean.abs().max(1.0) {
        ColumnKind::Numeric { mean, std }
    } else {
        ColumnKind::Constant { value: mean }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn strings(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    fn small() -> (Vec<String>, Vec<Vec<String>>) {
        let header = vec!["a".to_string(), "b".to_string(), "prot".to_string()];
        let rows = strings(&[&["1", "u", "0"], &["2", "v", "1"], &["3", "u", "1"]]);
        (header, rows)
    }

    #[test]
    fn infers_kinds_and_width() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        assert_eq!(s.encoded_width(), 3);
        assert!(matches!(s.columns[0].kind, ColumnKind::Numeric { .. }));
        assert_eq!(
            s.columns[1].kind,
            ColumnKind::Categorical {
                levels: vec!["u".into(), "v".into()]
            }
        );
        assert_eq!(s.feature_names(), vec!["a", "b=u", "b=v"]);
    }

    #[test]
    fn population_std_zscore() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        let x = s.encode(&rows).unwrap();
        assert_eq!(x[[1, 0]], 0.0);
        let std = (2.0f64 / 3.0).sqrt();
        assert!((x[[0, 0]] + 1.0 / std).abs() < 1e-12);
        assert_eq!(x.row(1).to_vec()[1..], [0.0, 1.0]);
    }

    #[test]
    fn override_forces_categorical() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[("a".into(), KindOverride::Categorical)]).unwrap();
        assert_eq!(s.encoded_width(), 5);
    }

    #[test]
    fn unseen_level_is_named() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        let err = s.encode(&strings(&[&["1", "w", "0"]])).unwrap_err();
        assert!(err.to_string().contains("'w'"), "{err}");
    }

    #[test]
    fn missing_values_are_imputed() {
        let h = vec!["a".to_string(), "b".to_string(), "p".to_string()];
        let rows = strings(&[&["1", "x", "0"], &["", "", "1"], &["3", "x", "0"]]);
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        let x = s.encode(&rows).unwrap();
        assert_eq!(x[[1, 0]], 0.0);
        assert_eq!(
            s.columns[1].kind,
            ColumnKind::Categorical {
                levels: vec!["x".into(), MISSING_LEVEL.into()]
            }
        );
        assert_eq!(x.row(1).to_vec()[1..], [0.0, 1.0]);
    }

    #[test]
    fn constant_column_is_dropped_and_restored() {
        let h = vec!["c".to_string(), "a".to_string(), "p".to_string()];
        let rows = strings(&[&["5", "1", "0"], &["5", "2", "1"]]);
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        assert_eq!(s.encoded_width(), 1);
        let x = s.encode(&rows).unwrap();
        let back = s.decode(x.view(), None).unwrap();
        assert_eq!(back[0][0], "5");
    }

    #[test]
    fn decode_roundtrip_and_argmax() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        let x = s.encode(&rows).unwrap();
        let back = s.decode(x.view(), None).unwrap();
        for (orig, dec) in rows.iter().zip(&back) {
            let a: f64 = dec[0].parse().unwrap();
            assert!((a - orig[0].parse::<f64>().unwrap()).abs() < 1e-9);
            assert_eq!(dec[1], orig[1]);
            assert_eq!(dec.len(), 2);
        }
        let y = array![[0.0, 0.2, 0.8], [0.0, 0.5, 0.5]];
        let dec = s.decode(y.view(), None).unwrap();
        assert_eq!(dec[0][1], "v");
        assert_eq!(dec[1][1], "u");
    }

    #[test]
    fn decode_can_reattach_protected() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        let x = s.encode(&rows).unwrap();
        let prot: Vec<String> = rows.iter().map(|r| r[2].clone()).collect();
        let dec = s.decode(x.view(), Some(&prot)).unwrap();
        assert_eq!(dec[1][2], "1");
        assert_eq!(s.decoded_header(true), vec!["a", "b", "prot"]);
        assert_eq!(s.decoded_header(false), vec!["a", "b"]);
    }

    #[test]
    fn decode_width_mismatch() {
        let (h, rows) = small();
        let s = Schema::infer(&h, &rows, 2, &[]).unwrap();
        assert!(matches!(
            s.decode(Array2::zeros((1, 4)).view(), None),
            Err(Error::Shape(_))
        ));
    }
}
