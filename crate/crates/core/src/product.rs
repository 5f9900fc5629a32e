//! The five-column velocity CSV and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsinvert::DisplacementProduct;

/// One CSV row. Rates are in cm/yr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub lon: f64,
    pub lat: f64,
    pub incidence_deg: f64,
    pub rate_cm_yr: f64,
    pub std_cm_yr: f64,
}

/// `{:.prec}` without a sign on values that round to zero.
fn fixed(value: f64, prec: usize) -> String {
    let s = format!("{value:.prec$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

impl CsvRow {
    /// `lon,lat,incidence,rate,std` as `%.6f,%.6f,%.4f,%.6f,%.6f`.
    pub fn format(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fixed(self.lon, 6),
            fixed(self.lat, 6),
            fixed(self.incidence_deg, 4),
            fixed(self.rate_cm_yr, 6),
            fixed(self.std_cm_yr, 6)
        )
    }
}

/// Valid pixels of `product` as CSV rows, mm/yr converted to cm/yr.
pub fn csv_rows(product: &DisplacementProduct) -> Vec<CsvRow> {
    product
        .valid_pixels()
        .map(|p| CsvRow {
            lon: p.lon,
            lat: p.lat,
            incidence_deg: p.incidence_deg,
            rate_cm_yr: p.rate_mm_yr * 0.1,
            std_cm_yr: p.std_mm_yr * 0.1,
        })
        .collect()
}

pub fn format_csv(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48);
    for r in rows {
        out.push_str(&r.format());
        out.push('\n');
    }
    out
}

/// Writes the product CSV. An empty product is an error and leaves no file.
pub fn write_csv(product: &DisplacementProduct, path: &Path) -> Result<usize> {
    let rows = csv_rows(product);
    if rows.is_empty() {
        return Err(Error::EmptyProduct);
    }
    write_atomic(path, format_csv(&rows).as_bytes())?;
    Ok(rows.len())
}

/// Parses a product CSV: no header, exactly five numeric columns.
pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(origin, format!("row {}: {e}", k + 1)))?;
        if record.len() != 5 {
            return Err(Error::parse(origin, format!("row {}: expected 5 columns, found {}", k + 1, record.len())));
        }
        let mut v = [0.0; 5];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, format!("row {}: `{field}` is not a number", k + 1)))?;
        }
        rows.push(CsvRow {
            lon: v[0],
            lat: v[1],
            incidence_deg: v[2],
            rate_cm_yr: v[3],
            std_cm_yr: v[4],
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
