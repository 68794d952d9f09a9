//! CSV matrix/vector reading and writing.
//!
//! One sample per row, comma separated. A single header row is allowed and
//! detected by a non-numeric first token. Ragged rows are rejected.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CovarianceMatrix, DesignMatrix, ResponseVector};

pub fn read_matrix_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut width = None;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if line == 0 && record.get(0).is_some_and(|t| t.parse::<f64>().is_err()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}, column {}: {tok:?} is not a number", line + 1, col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse(format!(
                    "ragged row at line {}: {} fields, expected {w}",
                    line + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows".into()));
    }
    Ok(rows)
}

pub fn read_design<P: AsRef<Path>>(path: P) -> Result<DesignMatrix> {
    let rows = read_matrix_rows(std::fs::File::open(path)?)?;
    DesignMatrix::from_rows(&rows)
}

/// Reads a covariance CSV; small asymmetries are averaged away.
pub fn read_covariance<P: AsRef<Path>>(path: P) -> Result<CovarianceMatrix> {
    let rows = read_matrix_rows(std::fs::File::open(path)?)?;
    let p = rows.len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("covariance CSV must be square".into()));
    }
    CovarianceMatrix::symmetrized(p, rows.concat())
}

/// Vectors are single-column CSV; a single row is accepted too.
pub fn read_vector_from<R: Read>(reader: R) -> Result<Vec<f64>> {
    let rows = read_matrix_rows(reader)?;
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().unwrap_or_default());
    }
    if rows[0].len() != 1 {
        return Err(Error::Parse(format!(
            "vector CSV must have one column, found {}",
            rows[0].len()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

pub fn read_response<P: AsRef<Path>>(path: P) -> Result<ResponseVector> {
    ResponseVector::new(read_vector_from(std::fs::File::open(path)?)?)
}

pub fn write_matrix<W: Write>(mut w: W, rows: impl IntoIterator<Item = impl AsRef<[f64]>>) -> Result<()> {
    for row in rows {
        writeln!(w, "{}", join_row(row.as_ref()))?;
    }
    Ok(())
}

pub fn write_design<P: AsRef<Path>>(path: P, x: &DesignMatrix) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(f, x.rows())
}

/// Single-column vector file.
pub fn write_vector<P: AsRef<Path>>(path: P, v: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in v {
        writeln!(f, "{x}")?;
    }
    Ok(())
}

/// Comma-joined shortest round-trip representation.
pub fn join_row(row: &[f64]) -> String {
    row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped() {
        let rows = read_matrix_rows("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = read_matrix_rows("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn non_numeric_body_rejected() {
        assert!(read_matrix_rows("1,2\nx,4\n".as_bytes()).is_err());
    }

    #[test]
    fn vectors_column_or_row() {
        assert_eq!(read_vector_from("y\n8\n3\n9\n".as_bytes()).unwrap(), vec![8.0, 3.0, 9.0]);
        assert_eq!(read_vector_from("8,3,9\n".as_bytes()).unwrap(), vec![8.0, 3.0, 9.0]);
        assert!(read_vector_from("1,2\n3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, [vec![0.3, 0.5], vec![1e-20, -2.0]]).unwrap();
        let back = read_matrix_rows(buf.as_slice()).unwrap();
        assert_eq!(back, vec![vec![0.3, 0.5], vec![1e-20, -2.0]]);
    }
}
