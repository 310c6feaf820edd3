//! Sample matrices and their CSV form.
//!
//! Rows are samples and columns are dimensions. CSV files carry no header
//! unless the caller says so.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// An `n x d` matrix of observations, one sample per row. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if let Some((idx, _)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // nalgebra stores column-major
            let (row, col) = (idx % data.nrows(), idx / data.nrows());
            return Err(Error::Parse {
                row,
                col,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::dims(dim, bad.len()));
        }
        let data = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(data)
    }

    pub fn from_vectors(rows: &[DVector<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::dims(dim, bad.len()));
        }
        Self::new(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn rows(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.nrows()).map(move |i| self.row(i))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Column means.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.nrows().max(1) as f64;
        DVector::from_fn(self.dim(), |j, _| self.data.column(j).sum() / n)
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> SampleMatrix {
        Self {
            data: self.data.rows(start, len).into_owned(),
        }
    }

    /// Rows mapped through `f`, used for coordinate changes.
    pub fn map_rows(&self, f: impl Fn(DVector<f64>) -> DVector<f64>) -> Result<SampleMatrix> {
        let rows: Vec<DVector<f64>> = self.rows().map(f).collect();
        if rows.is_empty() {
            return Ok(Self {
                data: DMatrix::zeros(0, 0),
            });
        }
        Self::from_vectors(&rows)
    }

    pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(header)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        // row numbers in messages are 1-based file lines
        let offset = if header { 2 } else { 1 };
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|c| c.is_empty()) {
                continue;
            }
            let mut row = Vec::with_capacity(record.len());
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: i + offset,
                    col: j + 1,
                    message: format!("expected a number, found {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: i + offset,
                        col: j + 1,
                        message: "non-finite value".into(),
                    });
                }
                row.push(v);
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        row: i + offset,
                        col: row.len(),
                        message: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, header: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), header)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        for i in 0..self.nrows() {
            wtr.write_record(self.data.row(i).iter().map(|v| format_float(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
