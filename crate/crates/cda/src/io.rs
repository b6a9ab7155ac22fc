//! CSV ingestion and output.
//!
//! Comma separated, `.` decimals, UTF-8. A header row is detected when any of
//! its fields fails to parse as a number; otherwise columns are named
//! `x1, x2, …`.

use std::fs;
use std::io::Write;
use std::path::Path;

use cda_core::dataset::DataSet;
use cda_core::DMatrix;

use crate::error::{CliError, Result};

pub fn read_csv(path: &Path) -> Result<DataSet> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text, path)
}

/// Parses CSV text; `path` only labels errors.
pub fn parse_csv(text: &str, path: &Path) -> Result<DataSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::format(path, e))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            names = Some(record.iter().map(str::to_owned).collect());
            continue;
        }
        let width = names.as_ref().map(Vec::len).or(rows.first().map(Vec::len));
        if let Some(w) = width {
            if record.len() != w {
                return Err(CliError::Parse {
                    path: path.into(),
                    line,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CliError::Parse {
                path: path.into(),
                line,
                column: j + 1,
                message: if field.is_empty() {
                    "missing value".to_owned()
                } else {
                    format!("not a number: {field:?}")
                },
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    path: path.into(),
                    line,
                    column: j + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Empty { path: path.into() });
    }
    let m = rows[0].len();
    let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    let names = names.unwrap_or_else(|| (1..=m).map(|j| format!("x{j}")).collect());
    Ok(DataSet::new(values, names)?)
}

/// Header plus one line per row. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn format_csv(names: &[String], values: &DMatrix<f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names).expect("write to memory");
    let mut buf = Vec::with_capacity(values.ncols());
    for i in 0..values.nrows() {
        buf.clear();
        buf.extend((0..values.ncols()).map(|j| values[(i, j)].to_string()));
        w.write_record(&buf).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

pub fn write_csv(path: &Path, names: &[String], values: &DMatrix<f64>) -> Result<()> {
    write_text(path, &format_csv(names, values))
}

/// Writes to `path`, or to standard output when `path` is `-`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        return out.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
