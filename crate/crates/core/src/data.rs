//! Row-per-sample datasets and their CSV representation.

use std::fmt::Write as _;
use std::path::Path;

use faer::Mat;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An ordered collection of `n` samples of dimension `d`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Mat<f64>,
    columns: Vec<String>,
}

impl Dataset {
    pub fn new(values: Mat<f64>) -> Self {
        let columns = (0..values.ncols()).map(|j| format!("c{j}")).collect();
        Self { values, columns }
    }

    pub fn with_columns(values: Mat<f64>, columns: Vec<String>) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        Ok(Self { values, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self::new(Mat::from_fn(rows.len(), d, |i, j| rows[i][j])))
    }

    pub fn from_fn(n: usize, d: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::new(Mat::from_fn(n, d, f))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn into_values(self) -> Mat<f64> {
        self.values
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.values[(i, j)]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim()).all(|j| self.values.col_as_slice(j).iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let values = Mat::from_fn(rows.len(), self.dim(), |i, j| self.values[(rows[i], j)]);
        Dataset {
            values,
            columns: self.columns.clone(),
        }
    }

    /// Columns selected by index.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let values = Mat::from_fn(self.n(), cols.len(), |i, j| self.values[(i, cols[j])]);
        let columns = cols.iter().map(|&c| self.columns[c].clone()).collect();
        Dataset { values, columns }
    }

    /// Per-column means.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        (0..self.dim())
            .map(|j| self.values.col_as_slice(j).iter().sum::<f64>() / n)
            .collect()
    }

    /// Copy with every column shifted to zero mean.
    pub fn centered(&self) -> Dataset {
        let means = self.column_means();
        let values = Mat::from_fn(self.n(), self.dim(), |i, j| self.values[(i, j)] - means[j]);
        Dataset {
            values,
            columns: self.columns.clone(),
        }
    }

    /// Copy with every column centered and scaled to unit (population) variance.
    /// Constant columns are only centered.
    pub fn standardized(&self) -> Dataset {
        let c = self.centered();
        let n = self.n().max(1) as f64;
        let scales: Vec<f64> = (0..self.dim())
            .map(|j| {
                let sd = (c.values.col_as_slice(j).iter().map(|v| v * v).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let values = Mat::from_fn(self.n(), self.dim(), |i, j| c.values[(i, j)] / scales[j]);
        Dataset {
            values,
            columns: self.columns.clone(),
        }
    }

    /// Content hash over shape and the exact bit patterns of the values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for j in 0..self.dim() {
            for v in self.values.col_as_slice(j) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    /// Reads a CSV file with a header row of column names.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())?;
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let mut ds = Self::from_rows(&rows)?;
        if rows.is_empty() {
            ds.values = Mat::zeros(0, columns.len());
        }
        ds.columns = columns;
        if ds.columns.len() != ds.dim() {
            return Err(Error::DimensionMismatch(
                "header and row widths differ".into(),
            ));
        }
        Ok(ds)
    }

    /// Writes the dataset as CSV with a header row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(&self.columns)?;
        for i in 0..self.n() {
            w.write_record((0..self.dim()).map(|j| format_f64(self.values[(i, j)])))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a header-free numeric CSV matrix.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a header-free numeric CSV matrix.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Mat<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path.as_ref())?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format_f64(m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}
