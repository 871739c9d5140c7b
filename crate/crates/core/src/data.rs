//! Dense datasets, invariant checks and CSV ingestion.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::EnvironmentSpec;
use crate::error::{invalid, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return invalid(format!("row {i} has {} entries, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Gathers the given rows (repeats allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.iter_rows().map(|r| dot(r, v)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Describes how a dataset was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Generating environment, for synthetic data.
    pub env: Option<EnvironmentSpec>,
    /// Rows overwritten by the contamination step, ascending.
    pub corrupted: Vec<usize>,
    /// Raw contaminated data may legitimately hold non-finite entries.
    pub contaminated_raw: bool,
}

/// Observations `x` (n x p), optional response `y` and optional true parameter.
///
/// Without a response the dataset describes a location (mean estimation)
/// problem: every row is a noisy observation of `truth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Option<Vec<f64>>,
    pub truth: Option<Vec<f64>>,
    pub meta: DatasetMeta,
}

/// One broken dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyRows,
    EmptyColumns,
    YLengthMismatch { expected: usize, found: usize },
    TruthLengthMismatch { expected: usize, found: usize },
    NonFiniteX { row: usize, col: usize },
    NonFiniteY { row: usize },
    NonFiniteTruth { col: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyRows => write!(f, "x has no rows (n must be >= 1)"),
            Violation::EmptyColumns => write!(f, "x has no columns (p must be >= 1)"),
            Violation::YLengthMismatch { expected, found } => {
                write!(f, "y length mismatch: expected {expected}, found {found}")
            }
            Violation::TruthLengthMismatch { expected, found } => {
                write!(
                    f,
                    "truth length mismatch: expected {expected}, found {found}"
                )
            }
            Violation::NonFiniteX { row, col } => write!(f, "non-finite entry at ({row},{col})"),
            Violation::NonFiniteY { row } => write!(f, "non-finite y at row {row}"),
            Violation::NonFiniteTruth { col } => write!(f, "non-finite truth at column {col}"),
        }
    }
}

impl Dataset {
    pub fn new(x: Matrix, y: Option<Vec<f64>>) -> Self {
        Self {
            x,
            y,
            truth: None,
            meta: DatasetMeta::default(),
        }
    }

    pub fn with_truth(mut self, truth: Vec<f64>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn is_regression(&self) -> bool {
        self.y.is_some()
    }

    /// Lists every broken invariant; empty when the dataset is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, p) = (self.n(), self.p());
        if n == 0 {
            out.push(Violation::EmptyRows);
        }
        if p == 0 {
            out.push(Violation::EmptyColumns);
        }
        if let Some(y) = &self.y {
            if y.len() != n {
                out.push(Violation::YLengthMismatch {
                    expected: n,
                    found: y.len(),
                });
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != p {
                out.push(Violation::TruthLengthMismatch {
                    expected: p,
                    found: t.len(),
                });
            }
        }
        if !self.meta.contaminated_raw {
            for (i, row) in self.x.iter_rows().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        out.push(Violation::NonFiniteX { row: i, col: j });
                    }
                }
            }
            if let Some(y) = &self.y {
                for (i, v) in y.iter().enumerate() {
                    if !v.is_finite() {
                        out.push(Violation::NonFiniteY { row: i });
                    }
                }
            }
        }
        if let Some(t) = &self.truth {
            for (j, v) in t.iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation::NonFiniteTruth { col: j });
                }
            }
        }
        out
    }

    /// Reads a CSV with header `x1,...,xp[,y]`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        let has_y = names.last() == Some(&"y");
        let p = if has_y { names.len() - 1 } else { names.len() };
        if p == 0 {
            return invalid("csv header has no x columns");
        }
        for (j, name) in names.iter().take(p).enumerate() {
            if *name != format!("x{}", j + 1) {
                return invalid(format!(
                    "csv header column {} is `{name}`, expected `x{}`",
                    j + 1,
                    j + 1
                ));
            }
        }
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut rows = 0;
        for record in reader.records() {
            let record = record?;
            if record.len() != names.len() {
                return invalid(format!(
                    "csv row {} has {} fields, expected {}",
                    rows + 1,
                    record.len(),
                    names.len()
                ));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    crate::Error::InvalidArgument(format!(
                        "csv row {} column {}: `{field}` is not a number",
                        rows + 1,
                        j + 1
                    ))
                })?;
                if has_y && j == p {
                    y.push(v);
                } else {
                    data.push(v);
                }
            }
            rows += 1;
        }
        let x = Matrix::new(rows, p, data)?;
        Ok(Dataset::new(x, has_y.then_some(y)))
    }

    /// Writes the CSV form atomically (temp file + rename).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
            if self.y.is_some() {
                header.push("y".into());
            }
            w.write_record(&header)?;
            for (i, row) in self.x.iter_rows().enumerate() {
                let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                if let Some(y) = &self.y {
                    rec.push(y[i].to_string());
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        write_atomic(path.as_ref(), &buf)
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
