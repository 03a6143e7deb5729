//! Equally spaced multivariate observations and their CSV representation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows `Y_0, Y_h, …, Y_{nh}` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    h: f64,
    d: usize,
    data: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(h: f64, d: usize, data: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
        }
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                what: "observation buffer length",
                expected: d.max(1) * (data.len() / d.max(1)),
                got: data.len(),
            });
        }
        let rows = data.len() / d;
        if rows < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                available: rows,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "observations",
                index: pos / d,
            });
        }
        Ok(Self { h, d, data })
    }

    pub fn from_rows(h: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::RaggedRow {
                row: i,
                expected: d,
                found: r.len(),
            });
        }
        Self::new(h, d, rows.concat())
    }

    /// Scalar series (`d = 1`).
    pub fn scalar(h: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(h, 1, values)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of increments `n` (rows minus one).
    pub fn n(&self) -> usize {
        self.data.len() / self.d - 1
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Applies `f` to every row, producing a new series of dimension `d_out`.
    pub fn map_rows(&self, d_out: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.rows() * d_out];
        for (src, dst) in self.iter_rows().zip(out.chunks_exact_mut(d_out)) {
            f(src, dst);
        }
        Self::new(self.h, d_out, out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid_csv(writer, self.h, self.d, &self.data)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }
}

/// Formats with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,y1,…,yd` rows.
pub(crate) fn write_grid_csv<W: Write>(writer: W, h: f64, d: usize, data: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|l| format!("y{l}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(d + 1);
    for (i, row) in data.chunks_exact(d).enumerate() {
        record.clear();
        record.push(fmt_f64(i as f64 * h));
        record.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Which CSV columns hold the observation components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSpec {
    /// Zero-based column indices.
    Indices(Vec<usize>),
    /// Header names; requires a header row.
    Names(Vec<String>),
    /// Every column except a leading `t` column, if the header has one.
    AllValues,
}

/// Reads equally spaced observations from CSV.
///
/// `h` is supplied by the caller in the chosen time unit (for instance a
/// 0.05 s recording measured in 2-hour units gives `h = 0.05 / 7200`).
pub fn ingest_csv(path: &Path, h: f64, columns: &ColumnSpec, has_header: bool) -> Result<ObservationSeries> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, h, columns, has_header)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    h: f64,
    columns: &ColumnSpec,
    has_header: bool,
) -> Result<ObservationSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let data_row_offset = usize::from(has_header);

    let mut records = rdr.records();
    let first = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::InsufficientData {
                needed: 2,
                available: 0,
            })
        }
    };
    let width = headers.as_ref().map_or(first.len(), Vec::len);

    let indices: Vec<usize> = match columns {
        ColumnSpec::Indices(idx) => idx.clone(),
        ColumnSpec::Names(names) => {
            let hdr = headers.as_ref().ok_or_else(|| {
                Error::InvalidArgument("column names require a header row".into())
            })?;
            names
                .iter()
                .map(|name| {
                    hdr.iter().position(|h| h == name).ok_or_else(|| {
                        Error::InvalidArgument(format!("column {name:?} not found in header"))
                    })
                })
                .collect::<Result<_>>()?
        }
        ColumnSpec::AllValues => {
            let skip_t = headers
                .as_ref()
                .and_then(|h| h.first())
                .is_some_and(|c| c.eq_ignore_ascii_case("t"));
            (usize::from(skip_t)..width).collect()
        }
    };
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no observation columns selected".into()));
    }
    if let Some(bad) = indices.iter().find(|&&i| i >= width) {
        return Err(Error::InvalidArgument(format!(
            "column index {bad} out of range for {width} columns"
        )));
    }

    let d = indices.len();
    let mut data = Vec::new();
    let mut push_record = |row: usize, rec: &csv::StringRecord| -> Result<()> {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
        for &col in &indices {
            let cell = &rec[col];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: col,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            data.push(v);
        }
        Ok(())
    };
    push_record(data_row_offset, &first)?;
    for (i, rec) in records.enumerate() {
        push_record(i + 1 + data_row_offset, &rec?)?;
    }
    ObservationSeries::new(h, d, data)
}
