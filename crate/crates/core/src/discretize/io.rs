//! Plain-text export of fields and tables.
//!
//! Floats are written with 17 significant digits so that files round-trip
//! bit-exactly.

use super::{DiscretizeError, Field, Grid};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DiscretizeError {
    DiscretizeError::Io(format!("{}: {e}", path.display()))
}

/// CSV with a header row and equally long numeric columns.
pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<(), DiscretizeError> {
    assert_eq!(header.len(), columns.len());
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(DiscretizeError::LengthMismatch { expected: rows, got: c.len() });
    }
    let mut out = String::with_capacity(rows * 26 * columns.len().max(1));
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        for (k, c) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", c[r]);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// `index,x,value` rows for every node.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<(), DiscretizeError> {
    let mut out = String::with_capacity(field.len() * 48);
    out.push_str("index,x,value\n");
    for (i, (x, v)) in field.nodes().iter().zip(field.values()).enumerate() {
        let _ = writeln!(out, "{i},{x:.16e},{v:.16e}");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// JSON header: grid descriptor, time stamp and basic statistics.
pub fn field_header(field: &Field) -> serde_json::Value {
    serde_json::json!({
        "grid": field.grid().descriptor(),
        "time": field.time(),
        "len": field.len(),
        "min": field.min(),
        "max": field.max(),
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), DiscretizeError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Read back a file written by [`write_field_csv`] onto `grid`.
pub fn read_field_csv(path: &Path, grid: Arc<Grid>) -> Result<Field, DiscretizeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut values = Vec::with_capacity(grid.len());
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let value = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| io_err(path, format!("line {}: malformed row", line_no + 1)))?;
        values.push(value);
    }
    Field::new(grid, values)
}
