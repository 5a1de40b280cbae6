//! Return panels, sample splits and artifact persistence.
//!
//! Panels are read from comma-separated files whose first header cell is
//! literally `date`; the remaining header cells name the assets. Artifacts
//! are JSON documents of the form `{"schema": .., "version": .., "payload": ..}`.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// T×p matrix of percent log-returns with date and asset labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    #[serde(with = "crate::serde_mat")]
    pub values: DMatrix<f64>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<String>, assets: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        ensure!(
            values.nrows() >= 2,
            Data,
            "no observations (need T >= 2, got {})",
            values.nrows()
        );
        ensure!(values.ncols() >= 1, Data, "panel has no assets");
        ensure!(
            dates.len() == values.nrows() && assets.len() == values.ncols(),
            Data,
            "labels ({} dates, {} assets) do not match a {}x{} matrix",
            dates.len(),
            assets.len(),
            values.nrows(),
            values.ncols()
        );
        if let Some((r, c)) = first_non_finite(&values) {
            return Err(Error::Data(format!("non-finite value at row {r}, column {c}")));
        }
        for w in dates.windows(2) {
            ensure!(
                compare_dates(&w[0], &w[1]) == Ordering::Less,
                Data,
                "dates not strictly increasing: {:?} then {:?}",
                w[0],
                w[1]
            );
        }
        Ok(Self { dates, assets, values })
    }

    /// Panel with synthetic integer dates `1..=T` and assets `a1..ap`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let dates = (1..=values.nrows()).map(|t| t.to_string()).collect();
        let assets = (1..=values.ncols()).map(|j| format!("a{j}")).collect();
        Self::new(dates, assets, values)
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        ensure!(
            start < end && end <= self.n_obs(),
            InvalidArgument,
            "bad row range {start}..{end}"
        );
        Self::new(
            self.dates[start..end].to_vec(),
            self.assets.clone(),
            self.values.rows(start, end - start).into_owned(),
        )
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// Integer labels compare numerically, anything else lexically (ISO dates).
fn compare_dates(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

pub fn load_returns_csv(path: impl AsRef<Path>) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_returns_csv(BufReader::new(file))
}

pub fn read_returns_csv<R: std::io::Read>(reader: R) -> Result<ReturnsPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    ensure!(
        headers.len() >= 2,
        Data,
        "header needs a date column and at least one asset"
    );
    ensure!(
        headers.get(0).map(str::trim) == Some("date"),
        Data,
        "first header column must be \"date\", found {:?}",
        headers.get(0).unwrap_or("")
    );
    let assets: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let p = assets.len();

    let mut dates = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        ensure!(
            rec.len() == p + 1,
            Data,
            "ragged row at line {line}: {} fields, expected {}",
            rec.len(),
            p + 1
        );
        dates.push(rec[0].trim().to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric cell {cell:?} at line {line}, column {:?}",
                    assets[j]
                ))
            })?;
            ensure!(
                v.is_finite(),
                Data,
                "non-finite cell {cell:?} at line {line}, column {:?}",
                assets[j]
            );
            data.push(v);
        }
    }
    ensure!(!dates.is_empty(), Data, "no observations");
    let values = DMatrix::from_row_slice(dates.len(), p, &data);
    ReturnsPanel::new(dates, assets, values)
}

pub fn write_returns_csv(panel: &ReturnsPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets.iter().cloned());
    w.write_record(&header)?;
    for (t, date) in panel.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(panel.values.row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// In-sample / out-of-sample partition of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit {
    pub in_sample: ReturnsPanel,
    pub out_sample: ReturnsPanel,
    pub t_star: usize,
}

/// The first `floor(ratio·T)` rows become the in-sample period.
pub fn split_sample(panel: &ReturnsPanel, ratio: f64) -> Result<SampleSplit> {
    ensure!(
        ratio > 0.0 && ratio < 1.0,
        InvalidArgument,
        "split ratio {ratio} outside (0,1)"
    );
    let t = panel.n_obs();
    let t_star = (ratio * t as f64).floor() as usize;
    ensure!(
        t_star >= 2,
        InvalidArgument,
        "in-sample length {t_star} < 2 (T={t}, ratio={ratio})"
    );
    ensure!(
        t - t_star >= 1,
        InvalidArgument,
        "empty out-of-sample period (T={t}, ratio={ratio})"
    );
    // The out-of-sample slice may hold a single row; bypass the T>=2 panel rule.
    let out_sample = ReturnsPanel {
        dates: panel.dates[t_star..].to_vec(),
        assets: panel.assets.clone(),
        values: panel.values.rows(t_star, t - t_star).into_owned(),
    };
    Ok(SampleSplit {
        in_sample: panel.slice_rows(0, t_star)?,
        out_sample,
        t_star,
    })
}

/// A persistable object with a fixed schema name and version.
pub trait Artifact: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const VERSION: u32;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema: String,
    version: u32,
    payload: serde_json::Value,
}

pub fn artifact_to_string<T: Artifact>(object: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvelopeOut {
        schema: T::SCHEMA,
        version: T::VERSION,
        payload: object,
    })?)
}

pub fn artifact_from_str<T: Artifact>(text: &str) -> Result<T> {
    let env: EnvelopeIn = serde_json::from_str(text)?;
    if env.schema != T::SCHEMA || env.version != T::VERSION {
        return Err(Error::Schema {
            expected: T::SCHEMA.into(),
            expected_version: T::VERSION,
            found: env.schema,
            found_version: env.version,
        });
    }
    Ok(serde_json::from_value(env.payload)?)
}

pub fn persist_artifact<T: Artifact>(object: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = artifact_to_string(object)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_artifact<T: Artifact>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    artifact_from_str(&text)
}

/// Sequence of symmetric p×p matrices indexed by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovPath {
    #[serde(with = "crate::serde_mat::vec")]
    pub matrices: Vec<DMatrix<f64>>,
}

impl CovPath {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Self {
        Self { matrices }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// Write one row per matrix: `date, vech(H)`.
    pub fn write_vech_csv(&self, dates: &[String], path: impl AsRef<Path>) -> Result<()> {
        ensure!(
            dates.len() == self.len(),
            InvalidArgument,
            "{} dates for {} matrices",
            dates.len(),
            self.len()
        );
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let p = self.dim();
        let mut header = vec!["date".to_string()];
        for j in 0..p {
            for i in j..p {
                header.push(format!("h_{}_{}", i + 1, j + 1));
            }
        }
        w.write_record(&header)?;
        for (date, h) in dates.iter().zip(&self.matrices) {
            let mut row = vec![date.clone()];
            row.extend(crate::linalg::vech(h).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

impl Artifact for CovPath {
    const SCHEMA: &'static str = "cov_path";
    const VERSION: u32 = 1;
}

/// Two-column CSV (`x`, `y` headers supplied by the caller).
pub fn write_two_column_csv(path: impl AsRef<Path>, headers: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([headers.0, headers.1])?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
