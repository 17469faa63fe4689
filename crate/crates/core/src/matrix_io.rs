//! Matrix and vector persistence.
//!
//! CSV files are headerless, one row per line, values written in Rust's
//! shortest round-trip form so a save/load cycle is exact. The binary format
//! is the magic `QAMPMAT1`, rows and columns as little-endian `u64`, then the
//! entries as little-endian `f64` in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QAMPMAT1";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_csv_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in a.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(format_err(
                    path,
                    format!("row {} has {} fields, expected {c}", i + 1, record.len()),
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(path, format!("row {}: cannot parse {field:?}", i + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| format_err(path, e.to_string()))
}

/// One value per line.
pub fn write_csv_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a single-column CSV.
pub fn read_csv_vector(path: &Path) -> Result<Vec<f64>> {
    let a = read_csv_matrix(path)?;
    if a.nrows() > 0 && a.ncols() != 1 {
        return Err(format_err(path, format!("expected one column, found {}", a.ncols())));
    }
    Ok(a.into_iter().collect())
}

pub fn write_binary_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for v in a.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file too short"))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(|_| format_err(path, "missing row count"))?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|_| format_err(path, "missing column count"))?;
    let cols = u64::from_le_bytes(word) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(path, "shape overflows"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(format_err(
            path,
            format!("expected {} payload bytes, found {}", count * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| format_err(path, e.to_string()))
}

/// Loads a matrix, choosing the format from the extension (`.bin` is binary,
/// anything else CSV).
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_binary_matrix(path),
        _ => read_csv_matrix(path),
    }
}

pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => write_binary_matrix(path, a),
        _ => write_csv_matrix(path, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let a = array![[0.1, -2.5e-300, 1.0 / 3.0], [f64::MAX, 0.0, -7.0]];
        write_csv_matrix(&p, &a).unwrap();
        assert_eq!(read_csv_matrix(&p).unwrap(), a);
    }

    #[test]
    fn binary_round_trip_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        write_matrix(&p, &a).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), a);
        std::fs::write(&p, b"NOTMAGIC").unwrap();
        assert!(matches!(read_binary_matrix(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_csv_matrix(&p).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let v = vec![0.5, -1.25, 1e-17];
        write_csv_vector(&p, &v).unwrap();
        assert_eq!(read_csv_vector(&p).unwrap(), v);
    }
}
