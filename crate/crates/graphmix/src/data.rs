//! Observation matrix and its file formats.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n x p matrix of real-valued observations (rows) over variables (columns).
///
/// Immutable after construction; all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wrap a matrix of observations. Fails on empty dimensions or
    /// non-finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must have n >= 1 and p >= 1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "data matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Build from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        let p = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} columns, expected {}",
                    i,
                    r.len(),
                    p
                )));
            }
        }
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Copy of observation `i` as a contiguous slice written into `buf`.
    pub(crate) fn row_into(&self, i: usize, buf: &mut [f64]) {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = self.values[(i, j)];
        }
    }

    /// Observation `i` as an owned vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.p()];
        self.row_into(i, &mut buf);
        buf
    }

    /// New matrix containing the given observation indices, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::InvalidInput("row selection is empty".into()));
        }
        let values = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.values[(idx[i], j)]);
        Self::new(values)
    }

    /// Read a headerless CSV where each line is one observation.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    /// Read headerless CSV from any reader.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let mut row = Vec::with_capacity(record.len());
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| Error::CsvParse {
                    line,
                    message: format!("cannot parse {field:?} as a number"),
                })?;
                row.push(v);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::CsvParse {
                        line,
                        message: format!(
                            "row has {} fields, expected {}",
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Write as headerless CSV, one observation per line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            for j in 0..self.p() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    /// Read the self-describing JSON container `{"n":…,"p":…,"values":[[…]]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let container: DataJson = serde_json::from_str(text)?;
        if container.values.len() != container.n {
            return Err(Error::InvalidInput(format!(
                "JSON container declares n={} but has {} rows",
                container.n,
                container.values.len()
            )));
        }
        for row in &container.values {
            if row.len() != container.p {
                return Err(Error::InvalidInput(format!(
                    "JSON container declares p={} but a row has {} entries",
                    container.p,
                    row.len()
                )));
            }
        }
        Self::from_rows(&container.values)
    }

    /// Serialize to the JSON container format.
    pub fn to_json_string(&self) -> String {
        let rows: Vec<Vec<f64>> = (0..self.n()).map(|i| self.row(i)).collect();
        let container = DataJson {
            n: self.n(),
            p: self.p(),
            values: rows,
        };
        serde_json::to_string(&container).expect("data serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct DataJson {
    n: usize,
    p: usize,
    values: Vec<Vec<f64>>,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::CsvParse {
        line,
        message: e.to_string(),
    }
}
