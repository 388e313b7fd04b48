//! CSV and JSON emission. Floats are written with 17 significant digits so
//! they round-trip exactly.

use std::fs;
use std::path::Path;

use serde::Serialize;

/// `v` in scientific notation with 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")
}
