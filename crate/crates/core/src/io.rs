//! CSV/JSON readers and writers, and ingestion of scalar time series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::Graphon;
use crate::sampling::Trajectory;
use crate::scalar::Real;

/// Minimum number of observations accepted by [`ingest_signal`].
pub const MIN_SIGNAL_ROWS: usize = 10;

fn parse_cell<T: Real>(s: &str, line: usize) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(T::lit)
        .map_err(|_| Error::Parse {
            line,
            message: format!("'{}' is not a number", s.trim()),
        })
}

/// Row-major CSV without a header.
pub fn write_matrix_csv<T: Real>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", cols.unwrap(), rec.len()),
            });
        }
        for cell in rec.iter() {
            data.push(parse_cell::<T>(cell, line)?);
        }
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty matrix file".into(),
    })?;
    Ok(DMatrix::from_row_slice(data.len() / cols, cols, &data))
}

/// One state per line under an `x` header.
pub fn write_trajectory_csv<T: Real>(path: &Path, t: &Trajectory<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x")?;
    for s in &t.states {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the first column of a trajectory CSV; a non-numeric first line is
/// treated as a header.
pub fn read_trajectory_csv<T: Real>(path: &Path, periodic: bool) -> Result<Trajectory<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut states = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(0).unwrap_or("");
        if i == 0 && cell.trim().parse::<f64>().is_err() {
            continue;
        }
        states.push(parse_cell::<T>(cell, i + 1)?);
    }
    Trajectory::new(states, 0, path.display().to_string(), periodic)
}

/// A square CSV of graphon values on a midpoint grid (row = x cell).
pub fn read_grid_graphon<T: Real>(path: &Path) -> Result<Graphon<T>> {
    let m = read_matrix_csv::<T>(path)?;
    if m.nrows() != m.ncols() {
        return Err(Error::domain(format!("graphon grid must be square, got {}×{}", m.nrows(), m.ncols())));
    }
    let size = m.nrows();
    let values: Vec<T> = m.transpose().iter().copied().collect();
    Ok(Graphon::from_grid(size, values)?.renamed(path.display().to_string()))
}

pub fn write_grid_graphon<T: Real>(path: &Path, g: &Graphon<T>, size: usize) -> Result<()> {
    write_matrix_csv(path, &g.sample_grid(size))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<S: DeserializeOwned>(path: &Path) -> Result<S> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse::<usize>().map(Column::Index).unwrap_or_else(|_| Column::Name(s.to_string())))
    }
}

/// A time-ordered scalar series and its affine map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub name: String,
    pub raw: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl SignalSeries {
    pub fn new(name: impl Into<String>, raw: Vec<f64>) -> Result<Self> {
        if raw.len() < MIN_SIGNAL_ROWS {
            return Err(Error::domain(format!(
                "signal needs at least {MIN_SIGNAL_ROWS} rows, got {}",
                raw.len()
            )));
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("signal value {bad} is not finite")));
        }
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::domain("constant signal cannot be scaled to [0, 1]"));
        }
        Ok(Self {
            name: name.into(),
            raw,
            min,
            max,
        })
    }

    pub fn scale(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }

    pub fn scaled(&self) -> Vec<f64> {
        self.raw.iter().map(|&v| self.scale(v)).collect()
    }

    pub fn trajectory<T: Real>(&self) -> Result<Trajectory<T>> {
        Trajectory::new(
            self.scaled().into_iter().map(T::lit).collect(),
            0,
            format!("signal:{}", self.name),
            false,
        )
    }
}

/// Reads one numeric column of a CSV file. A first line whose selected cell is
/// not numeric is taken as the header; later non-numeric cells are errors.
pub fn ingest_signal(path: &Path, column: &Column) -> Result<SignalSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = rdr.records().enumerate().peekable();
    let mut index = match column {
        Column::Index(i) => Some(*i),
        Column::Name(_) => None,
    };
    let mut name = match column {
        Column::Index(i) => format!("column {i}"),
        Column::Name(n) => n.clone(),
    };

    if let Some((_, Ok(first))) = records.peek() {
        let header = match column {
            Column::Name(n) => {
                let pos = first.iter().position(|c| c == n).ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("no column named '{n}' in header"),
                })?;
                index = Some(pos);
                true
            }
            Column::Index(i) => match first.get(*i) {
                Some(cell) if cell.parse::<f64>().is_err() => {
                    name = cell.to_string();
                    true
                }
                _ => false,
            },
        };
        if header {
            records.next();
        }
    }
    let index = index.expect("column resolved");

    let mut raw = Vec::new();
    for (i, rec) in records {
        let line = i + 1;
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cell = rec.get(index).ok_or_else(|| Error::Parse {
            line,
            message: format!("missing column {index}"),
        })?;
        raw.push(parse_cell::<f64>(cell, line)?);
    }
    SignalSeries::new(name, raw)
}
