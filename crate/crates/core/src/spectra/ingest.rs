use std::fs;
use std::path::{Path, PathBuf};

use super::{Family, Provenance, Spectrum};
use crate::error::{Error, Result};

/// Negative eigenvalues down to this size are treated as round-off.
const NEGATIVE_TOL: f64 = 1e-12;
const MIN_VALUES: usize = 3;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub family: Family,
    /// Sample size behind the spectrum (`T` for auto-covariance).
    pub n: usize,
    /// Noise sample size, Fisher only.
    pub t: Option<usize>,
    /// Expected number of eigenvalues, if known.
    pub p: Option<usize>,
    /// Read this named column of a CSV file instead of one value per line.
    pub column: Option<String>,
}

/// Reads eigenvalues from a text file (one per line, `#` comments allowed)
/// or from a named CSV column, and returns them as a descending spectrum.
pub fn ingest_spectrum(path: &Path, opts: &IngestOptions) -> Result<Spectrum> {
    let raw = match &opts.column {
        Some(col) => read_csv_column(path, col)?,
        None => read_lines(path)?,
    };
    let err = |line: usize, message: String| Error::Ingest {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut values = Vec::with_capacity(raw.len());
    for (line, v) in raw {
        if !v.is_finite() {
            return Err(err(line, format!("non-finite value {v}")));
        }
        if v < -NEGATIVE_TOL {
            return Err(err(line, format!("negative eigenvalue {v}")));
        }
        values.push(v.max(0.0));
    }
    if values.len() < MIN_VALUES {
        return Err(err(0, format!("need at least {MIN_VALUES} eigenvalues, found {}", values.len())));
    }
    if let Some(p) = opts.p {
        if p != values.len() {
            return Err(err(0, format!("expected {p} eigenvalues, found {}", values.len())));
        }
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Spectrum::new(values, opts.n, opts.t, opts.family, Provenance::Ingested)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let v: f64 = s.parse().map_err(|_| Error::Ingest {
            path: path.into(),
            line: i + 1,
            message: format!("cannot parse '{s}' as a number"),
        })?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn read_csv_column(path: &Path, column: &str) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Ingest {
            path: path.into(),
            line: 1,
            message: format!("no column named '{column}'"),
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = rec.get(idx).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| Error::Ingest {
            path: path.into(),
            line,
            message: format!("cannot parse '{field}' as a number"),
        })?;
        out.push((line, v));
    }
    Ok(out)
}
