//! Numeric tabular data with a binary sensitive column.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing or non-finite value")]
    NonFinite { row: usize, column: String },
    #[error("no rows with sensitive level `{0}`")]
    EmptyLevel(String),
    #[error("source and target levels are both `{0}`")]
    SameLevels(String),
    #[error("column `{column}` has {got} values, expected {expected}")]
    Ragged {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Named numeric columns plus the sensitive attribute.
///
/// Stored column-major. The sensitive values are usually 0/1 after
/// ingestion, but are kept as reals so that downstream code can reject
/// non-binary inputs with a precise error.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    sensitive_name: String,
    sensitive: Vec<f64>,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        sensitive_name: impl Into<String>,
        sensitive: Vec<f64>,
    ) -> Result<Self> {
        let sensitive_name = sensitive_name.into();
        if names.len() != columns.len() {
            return Err(DatasetError::Ragged {
                column: "<header>".into(),
                expected: names.len(),
                got: columns.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in names.iter().chain(std::iter::once(&sensitive_name)) {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
        }
        let n = sensitive.len();
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(DatasetError::Ragged {
                    column: name.clone(),
                    expected: n,
                    got: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row: row + 1,
                    column: name.clone(),
                });
            }
        }
        if let Some(row) = sensitive.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite {
                row: row + 1,
                column: sensitive_name,
            });
        }
        Ok(Self {
            names,
            columns,
            sensitive_name,
            sensitive,
        })
    }

    /// Builds a dataset from rows of feature values.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], sensitive_name: &str, sensitive: Vec<f64>) -> Result<Self> {
        let p = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(DatasetError::Ragged {
                    column: format!("row {}", i + 1),
                    expected: p,
                    got: row.len(),
                });
            }
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            columns,
            sensitive_name,
            sensitive,
        )
    }

    pub fn len(&self) -> usize {
        self.sensitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensitive.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sensitive_name(&self) -> &str {
        &self.sensitive_name
    }

    pub fn sensitive(&self) -> &[f64] {
        &self.sensitive
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.column_index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Row indices whose sensitive value equals `level`.
    pub fn group_rows(&self, level: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.sensitive[i] == level).collect()
    }

    /// Values of the named columns at `row`.
    pub fn row(&self, row: usize, columns: &[usize]) -> Vec<f64> {
        columns.iter().map(|&c| self.columns[c][row]).collect()
    }

    /// Adds uniform noise of half the smallest positive gap between distinct
    /// values to every feature column (not the sensitive one). Columns with a
    /// single distinct value are left alone.
    pub fn jittered(&self, seed: u64) -> Self {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(k, col)| {
                let Some(gap) = min_positive_gap(col) else {
                    return col.clone();
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                let half = gap / 2.0;
                col.iter().map(|v| v + rng.gen_range(-half..half)).collect()
            })
            .collect();
        Self {
            columns,
            ..self.clone()
        }
    }

    /// SHA-256 over names and the exact bit patterns of every value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in self.names.iter().chain(std::iter::once(&self.sensitive_name)) {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for col in self.columns.iter().chain(std::iter::once(&self.sensitive)) {
            for v in col {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn min_positive_gap(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
}

/// How to read a CSV file into a [`Dataset`].
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub sensitive: String,
    /// Label mapped to 0.
    pub source_level: String,
    /// Label mapped to 1.
    pub target_level: String,
    /// Feature columns to keep; `None` keeps every non-sensitive column.
    pub columns: Option<Vec<String>>,
}

impl IngestOptions {
    pub fn new(sensitive: impl Into<String>) -> Self {
        Self {
            sensitive: sensitive.into(),
            source_level: "0".into(),
            target_level: "1".into(),
            columns: None,
        }
    }

    pub fn levels(mut self, source: impl Into<String>, target: impl Into<String>) -> Self {
        self.source_level = source.into();
        self.target_level = target.into();
        self
    }

    pub fn columns<S: Into<String>>(mut self, columns: impl IntoIterator<Item = S>) -> Self {
        self.columns = Some(columns.into_iter().map(Into::into).collect());
        self
    }
}

/// Result of [`ingest_csv`].
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Rows whose sensitive label matched neither level.
    pub dropped_rows: usize,
    /// Kept rows as 0-based indices into the file's data rows.
    pub kept_rows: Vec<usize>,
}

fn label_matches(label: &str, level: &str) -> bool {
    let (label, level) = (label.trim(), level.trim());
    if label == level {
        return true;
    }
    match (label.parse::<f64>(), level.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Ingested> {
    ingest_reader(std::fs::File::open(path)?, opts)
}

/// As [`ingest_csv`] from any reader. Row numbers in errors count data rows
/// from 1 (the header is not counted).
pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<Ingested> {
    if label_matches(&opts.source_level, &opts.target_level) {
        return Err(DatasetError::SameLevels(opts.source_level.clone()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let s_idx = find(&opts.sensitive)?;
    let names: Vec<String> = match &opts.columns {
        Some(cols) => cols.clone(),
        None => header.iter().filter(|h| **h != opts.sensitive).cloned().collect(),
    };
    let idx = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut columns = vec![Vec::new(); names.len()];
    let mut sensitive = Vec::new();
    let mut kept_rows = Vec::new();
    let mut dropped = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let label = record.get(s_idx).unwrap_or("");
        let s = if label_matches(label, &opts.source_level) {
            0.0
        } else if label_matches(label, &opts.target_level) {
            1.0
        } else {
            dropped += 1;
            continue;
        };
        for ((col, &c), name) in columns.iter_mut().zip(&idx).zip(&names) {
            let raw = record.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| {
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    DatasetError::NonFinite {
                        row: r + 1,
                        column: name.clone(),
                    }
                } else {
                    DatasetError::Unparseable {
                        row: r + 1,
                        column: name.clone(),
                        value: raw.to_string(),
                    }
                }
            })?;
            if !v.is_finite() {
                return Err(DatasetError::NonFinite {
                    row: r + 1,
                    column: name.clone(),
                });
            }
            col.push(v);
        }
        sensitive.push(s);
        kept_rows.push(r);
    }
    for (level, label) in [(0.0, &opts.source_level), (1.0, &opts.target_level)] {
        if !sensitive.contains(&level) {
            return Err(DatasetError::EmptyLevel(label.clone()));
        }
    }
    Ok(Ingested {
        dataset: Dataset::new(names, columns, opts.sensitive.clone(), sensitive)?,
        dropped_rows: dropped,
        kept_rows,
    })
}
