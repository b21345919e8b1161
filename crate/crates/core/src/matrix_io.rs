//! Matrix file formats.
//!
//! CSV: a header row of column names followed by one row per record. Values are
//! written in Rust's shortest round-trip float notation, so a write/read cycle
//! is lossless.
//!
//! Binary (little endian):
//!
//! | bytes | content                          |
//! |-------|----------------------------------|
//! | 4     | magic `GSFM`                     |
//! | 1     | dtype, `1` = f64                 |
//! | 3     | reserved, zero                   |
//! | 8     | rows `I` (u64)                   |
//! | 8     | columns `N` (u64)                |
//! | 8·I·N | payload, column-major f64 values |

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{GsfaError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"GSFM";
pub const DTYPE_F64: u8 = 1;

/// Writes `m` as CSV, one matrix row per line.
pub fn write_csv(path: impl AsRef<Path>, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, to_csv(header, m)?)?;
    Ok(())
}

pub fn to_csv(header: &[String], m: &DMatrix<f64>) -> Result<String> {
    if header.len() != m.ncols() {
        return Err(GsfaError::Dimension(format!("{} column names for {} columns", header.len(), m.ncols())));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Reads a CSV written by [`write_csv`]; returns the header and the matrix.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(GsfaError::Parse("empty CSV file".into())),
    };
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(GsfaError::Parse(format!(
                "line {} has {} fields, expected {}",
                k + 2,
                fields.len(),
                header.len()
            )));
        }
        for f in fields {
            let x: f64 =
                f.trim().parse().map_err(|_| GsfaError::Parse(format!("line {}: invalid number {f:?}", k + 2)))?;
            values.push(x);
        }
        rows += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &values)))
}

pub fn write_binary(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * m.len());
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&[DTYPE_F64, 0, 0, 0]);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for x in m.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[..4] != BINARY_MAGIC {
        return Err(GsfaError::Parse("not a binary matrix file".into()));
    }
    if bytes[4] != DTYPE_F64 {
        return Err(GsfaError::Parse(format!("unsupported dtype {}", bytes[4])));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(24))
        .ok_or_else(|| GsfaError::Parse("matrix dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(GsfaError::Parse(format!("payload has {} bytes, expected {}", bytes.len() - 24, expected - 24)));
    }
    let values: Vec<f64> =
        bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_vec(rows, cols, values))
}

/// Row-major nested vectors, the layout used inside JSON containers.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Inverse of [`to_rows`]; `cols` is used when there are no rows.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(cols, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(GsfaError::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, 0.1, 3.0, f64::MAX]);
        let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let csv = dir.path().join("m.csv");
        write_csv(&csv, &header, &m).unwrap();
        let (h, back) = read_csv(&csv).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, m);

        let bin = dir.path().join("m.bin");
        write_binary(&bin, &m).unwrap();
        assert_eq!(read_binary(&bin).unwrap(), m);
        let raw = std::fs::read(&bin).unwrap();
        assert_eq!(&raw[..4], b"GSFM");
        assert_eq!(raw.len(), 24 + 8 * 6);
        std::fs::write(&bin, &raw[..30]).unwrap();
        assert!(matches!(read_binary(&bin), Err(GsfaError::Parse(_))));
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(read_csv(&p), Err(GsfaError::Parse(_))));
    }
}
