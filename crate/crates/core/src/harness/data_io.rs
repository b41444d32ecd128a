//! LIBSVM and CSV dataset readers and writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::{Dataset, Features};

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), line, msg: msg.into() }
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based indices.
///
/// Blank lines and `#` comments are skipped. The feature dimension is the
/// largest index seen. Datasets of dimension at most 512 are stored densely.
pub fn parse_libsvm(text: &str, source: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(source, line_no, format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(source, line_no, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(source, line_no, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err(source, line_no, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(source, line_no, format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(source, line_no, format!("non-finite feature value {val}")));
            }
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        row.sort_by_key(|&(i, _)| i);
        if row.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(parse_err(source, line_no, "duplicate feature index"));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(source, 0, "no samples"));
    }
    Ok(Dataset::from_sparse_rows(dim.max(1), rows, labels)?.densified_if_small())
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    parse_libsvm(&fs::read_to_string(path)?, &path.display().to_string())
}

/// LIBSVM text with zeros omitted and shortest round-trip number formatting.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.len() {
        write!(out, "{}", data.label(i)).unwrap();
        match data.features() {
            Features::Dense { dim, values } => {
                for (j, v) in values[i * dim..(i + 1) * dim].iter().enumerate() {
                    if *v != 0.0 {
                        write!(out, " {}:{}", j + 1, v).unwrap();
                    }
                }
            }
            Features::Sparse { rows, .. } => {
                for (j, v) in rows[i].indices.iter().zip(&rows[i].values) {
                    write!(out, " {}:{}", j + 1, v).unwrap();
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_libsvm_string(data))?;
    Ok(())
}

/// Reads a dense numeric CSV; `label_column` is 0-based.
pub fn load_csv(path: &Path, label_column: usize, has_header: bool) -> Result<Dataset> {
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(parse_err(&source, line, format!("expected {} columns, got {}", width.unwrap(), rec.len())));
        }
        if label_column >= rec.len() {
            return Err(parse_err(&source, line, format!("label column {label_column} out of range")));
        }
        let mut row = Vec::with_capacity(rec.len().saturating_sub(1));
        let mut label = 0.0;
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(&source, line, format!("column {}: non-numeric cell {cell:?}", col + 1)))?;
            if col == label_column {
                label = v;
            } else {
                row.push(v);
            }
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(&source, 0, "no samples"));
    }
    if rows[0].is_empty() {
        return Err(parse_err(&source, 1, "no feature columns"));
    }
    Dataset::from_dense_rows(rows, labels)
}

/// Writes a header row (`label,f1,...`) and one dense row per sample with the
/// label first.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in data.to_dense_rows().into_iter().enumerate() {
        let mut cells = vec![data.label(i).to_string()];
        cells.extend(row.iter().map(f64::to_string));
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}
