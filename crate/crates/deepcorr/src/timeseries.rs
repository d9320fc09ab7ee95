//! Sample-by-channel time series carrier plus the two on-disk formats the
//! CLI ingests: CSV (header row of channel names) and raw little-endian f64
//! with a JSON sidecar.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// samples x channels matrix of real values with a sampling rate.
#[derive(Debug, Clone)]
pub struct TimeSeriesMatrix {
    pub data: Array2<f64>,
    pub fs_hz: f64,
    pub channel_labels: Option<Vec<String>>,
    /// Leading samples contaminated by filter/lag edge effects. Excluded
    /// from correlation statistics downstream.
    pub burn_in: usize,
}

impl TimeSeriesMatrix {
    pub fn new(data: Array2<f64>, fs_hz: f64) -> Result<Self> {
        if fs_hz <= 0.0 {
            return Err(Error::Config(format!("fs_hz must be > 0, got {fs_hz}")));
        }
        crate::linalg::check_finite(data.view(), "time series")?;
        Ok(TimeSeriesMatrix {
            data,
            fs_hz,
            channel_labels: None,
            burn_in: 0,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.data.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} channels",
                labels.len(),
                self.data.ncols()
            )));
        }
        self.channel_labels = Some(labels);
        Ok(self)
    }

    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    /// Copy with the burn-in prefix removed (and the flag reset).
    pub fn trim_burn_in(&self) -> TimeSeriesMatrix {
        let b = self.burn_in.min(self.samples());
        TimeSeriesMatrix {
            data: self.data.slice(ndarray::s![b.., ..]).to_owned(),
            fs_hz: self.fs_hz,
            channel_labels: self.channel_labels.clone(),
            burn_in: 0,
        }
    }
}

/// Sidecar metadata for the raw-f64 format, stored at `<path>.meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub rows: usize,
    pub cols: usize,
    pub fs_hz: f64,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    Csv,
    RawF64,
}

/// Reads a time series from disk in the given format.
pub fn ingest(path: &Path, format: FileFormat) -> Result<TimeSeriesMatrix> {
    match format {
        FileFormat::Csv => ingest_csv(path),
        FileFormat::RawF64 => ingest_raw(path),
    }
}

fn parse_err(path: &Path, location: String, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location,
        message,
    }
}

/// CSV layout: first line `fs_hz=<rate>`, second line the channel names,
/// then one row per sample, '.' decimal, UTF-8.
pub fn ingest_csv(path: &Path) -> Result<TimeSeriesMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, fs_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, "line 1".into(), "empty file".into()))?;
    let fs_hz: f64 = fs_line
        .strip_prefix("fs_hz=")
        .ok_or_else(|| parse_err(path, "line 1".into(), "expected 'fs_hz=<rate>'".into()))?
        .trim()
        .parse()
        .map_err(|e| parse_err(path, "line 1".into(), format!("bad sampling rate: {e}")))?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, "line 2".into(), "missing header row".into()))?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let cols = labels.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(parse_err(
                path,
                format!("line {}", lineno + 1),
                format!("expected {cols} cells, found {}", cells.len()),
            ));
        }
        for (ci, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|e| {
                parse_err(
                    path,
                    format!("line {} column {}", lineno + 1, ci + 1),
                    format!("bad number: {e}"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {} column {} ({})",
                    rows + 1,
                    labels[ci],
                    path.display()
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(path, "line 3".into(), "no data rows".into()));
    }
    let arr = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Data(format!("shape error: {e}")))?;
    TimeSeriesMatrix::new(arr, fs_hz)?.with_labels(labels)
}

pub fn write_csv(ts: &TimeSeriesMatrix, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "fs_hz={}", ts.fs_hz)?;
    let labels: Vec<String> = match &ts.channel_labels {
        Some(l) => l.clone(),
        None => (0..ts.channels()).map(|i| format!("ch{i}")).collect(),
    };
    writeln!(f, "{}", labels.join(","))?;
    for row in ts.data.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Raw format: little-endian 64-bit floats, row-major, with the sidecar at
/// `<path>.meta.json`.
pub fn ingest_raw(path: &Path) -> Result<TimeSeriesMatrix> {
    let meta_path = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| {
        parse_err(
            &meta_path,
            "sidecar".into(),
            format!("cannot read sidecar: {e}"),
        )
    })?;
    let meta: RawSidecar = serde_json::from_str(&meta_text)
        .map_err(|e| parse_err(&meta_path, "sidecar".into(), format!("bad sidecar: {e}")))?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expected = meta.rows * meta.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "size mismatch for {}: expected {} bytes ({}x{}x8), found {}",
            path.display(),
            expected,
            meta.rows,
            meta.cols,
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(meta.rows * meta.cols);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value at row {} column {} ({})",
                i / meta.cols + 1,
                i % meta.cols + 1,
                path.display()
            )));
        }
        data.push(v);
    }
    let arr = Array2::from_shape_vec((meta.rows, meta.cols), data)
        .map_err(|e| Error::Data(format!("shape error: {e}")))?;
    let ts = TimeSeriesMatrix::new(arr, meta.fs_hz)?;
    match meta.labels {
        Some(l) => ts.with_labels(l),
        None => Ok(ts),
    }
}

pub fn write_raw(ts: &TimeSeriesMatrix, path: &Path) -> Result<()> {
    let meta = RawSidecar {
        rows: ts.samples(),
        cols: ts.channels(),
        fs_hz: ts.fs_hz,
        labels: ts.channel_labels.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in ts.data.iter() {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}
