//! Measure file formats.
//!
//! * CSV: one atom per row, `d` comma-separated floats. Lines starting with
//!   `#` are headers/comments. Values are written in shortest round-trip form.
//! * Binary: magic `SMW1`, `u32` N, `u32` d, then `N*d` little-endian `f64`
//!   in row-major order.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, SmwError};
use crate::measures::DiscreteMeasure;

pub const BINARY_MAGIC: &[u8; 4] = b"SMW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.bin` and `.smw` map to binary, everything else to CSV.
    pub fn from_path(path: impl AsRef<Path>) -> Self {
        match path.as_ref().extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("smw") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = SmwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "binary" | "bin" => Ok(Format::Binary),
            other => Err(SmwError::invalid(format!("unknown format '{other}'"))),
        }
    }
}

pub fn load_measure(path: impl AsRef<Path>, format: Format) -> Result<DiscreteMeasure> {
    let path = path.as_ref();
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| SmwError::io(path, e))?;
            parse_csv(&text)
        }
        Format::Binary => {
            let bytes = fs::read(path).map_err(|e| SmwError::io(path, e))?;
            decode_binary(&bytes)
        }
    }
}

pub fn save_measure(
    measure: &DiscreteMeasure,
    path: impl AsRef<Path>,
    format: Format,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Csv => to_csv(measure).into_bytes(),
        Format::Binary => encode_binary(measure),
    };
    fs::write(path, bytes).map_err(|e| SmwError::io(path, e))
}

/// Loads with the format implied by the file extension.
pub fn load_measure_auto(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let format = Format::from_path(&path);
    load_measure(path, format)
}

pub fn parse_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut atoms = Vec::new();
    let mut dim = None;
    let mut row = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0usize;
        for field in line.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| {
                SmwError::Parse(format!(
                    "line {}: cannot parse '{}'",
                    line_no + 1,
                    field.trim()
                ))
            })?;
            atoms.push(value);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(SmwError::Shape {
                    row,
                    expected: d,
                    found: count,
                })
            }
            Some(_) => {}
        }
        row += 1;
    }
    let dim = dim.ok_or_else(|| SmwError::Parse("no atoms found".into()))?;
    DiscreteMeasure::new(atoms, dim)
}

pub fn to_csv(measure: &DiscreteMeasure) -> String {
    let mut out = String::with_capacity(measure.atoms().len() * 20);
    for row in measure.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn encode_binary(measure: &DiscreteMeasure) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * measure.atoms().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(measure.n_atoms() as u32).to_le_bytes());
    out.extend_from_slice(&(measure.dim() as u32).to_le_bytes());
    for x in measure.atoms() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DiscreteMeasure> {
    if bytes.len() < 12 {
        return Err(SmwError::Parse(format!(
            "binary measure truncated: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(SmwError::Parse("bad magic, expected SMW1".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| SmwError::Parse("header overflow".into()))?;
    let body = &bytes[12..];
    if body.len() != expected {
        return Err(SmwError::Parse(format!(
            "expected {expected} payload bytes for N={n}, d={d}, found {}",
            body.len()
        )));
    }
    let atoms = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DiscreteMeasure::new(atoms, d)
}

/// Writes a matrix as CSV, one row per line.
pub fn write_matrix_csv(path: impl AsRef<Path>, rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SmwError::io(path, e))
}

/// Reads a CSV matrix (same rules as measure CSV).
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SmwError::io(path, e))?;
    let m = parse_csv(&text)?;
    Ok(m.rows().map(|r| r.to_vec()).collect())
}
