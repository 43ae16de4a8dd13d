//! Dense matrix files.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! b"UGM1" | rows: u64 | cols: u64 | kind: u8 (0 real, 1 complex) | entries
//! ```
//!
//! Entries are `f64` in row-major order; complex entries store `re, im`
//! pairs. The CSV form has a one-line header and one matrix row per line,
//! with complex entries written as adjacent `re,im` columns.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::{CMatrix, CVector, Error, RMatrix, Result};

const MAGIC: &[u8; 4] = b"UGM1";

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    Real(RMatrix),
    Complex(CMatrix),
}

impl MatrixData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Real(m) => m.shape(),
            Self::Complex(m) => m.shape(),
        }
    }

    pub fn into_complex(self) -> CMatrix {
        match self {
            Self::Real(m) => crate::linalg::to_complex(&m),
            Self::Complex(m) => m,
        }
    }
}

pub fn write_binary<W: Write>(mut w: W, data: &MatrixData) -> Result<()> {
    let (rows, cols) = data.shape();
    w.write_all(MAGIC)?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    match data {
        MatrixData::Real(m) => {
            w.write_all(&[0])?;
            for i in 0..rows {
                for j in 0..cols {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        MatrixData::Complex(m) => {
            w.write_all(&[1])?;
            for i in 0..rows {
                for j in 0..cols {
                    w.write_all(&m[(i, j)].re.to_le_bytes())?;
                    w.write_all(&m[(i, j)].im.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<MatrixData> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let per_entry = match kind[0] {
        0 => 1,
        1 => 2,
        k => return Err(Error::Format(format!("unknown entry kind {k}"))),
    };
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(per_entry))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(match kind[0] {
        0 => MatrixData::Real(RMatrix::from_row_slice(rows, cols, &values)),
        _ => {
            let entries: Vec<Complex64> = values
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            MatrixData::Complex(CMatrix::from_row_slice(rows, cols, &entries))
        }
    })
}

pub fn write_csv<W: Write>(w: W, data: &MatrixData) -> Result<()> {
    let (rows, cols) = data.shape();
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> = match data {
        MatrixData::Real(_) => (0..cols).map(|j| format!("c{j}")).collect(),
        MatrixData::Complex(_) => (0..cols)
            .flat_map(|j| [format!("re{j}"), format!("im{j}")])
            .collect(),
    };
    out.write_record(&header).map_err(csv_error)?;
    for i in 0..rows {
        let record: Vec<String> = match data {
            MatrixData::Real(m) => (0..cols).map(|j| format!("{:e}", m[(i, j)])).collect(),
            MatrixData::Complex(m) => (0..cols)
                .flat_map(|j| [format!("{:e}", m[(i, j)].re), format!("{:e}", m[(i, j)].im)])
                .collect(),
        };
        out.write_record(&record).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a CSV matrix; headers starting with `re` mark the complex layout.
pub fn read_csv<R: Read>(r: R) -> Result<MatrixData> {
    let mut reader = csv::Reader::from_reader(r);
    let complex = reader
        .headers()
        .map_err(csv_error)?
        .get(0)
        .is_some_and(|h| h.trim().starts_with("re"));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row: Vec<f64> = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("{f:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if complex && cols % 2 == 1 {
        return Err(Error::Format("complex rows need re,im pairs".into()));
    }
    let flat: Vec<f64> = rows.concat();
    if complex {
        let entries: Vec<Complex64> = flat
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Ok(MatrixData::Complex(CMatrix::from_row_slice(
            rows.len(),
            cols / 2,
            &entries,
        )))
    } else {
        Ok(MatrixData::Real(RMatrix::from_row_slice(
            rows.len(),
            cols,
            &flat,
        )))
    }
}

/// A coefficient vector as a one-column complex CSV (`re0,im0` header).
pub fn write_vector_csv<W: Write>(w: W, v: &CVector) -> Result<()> {
    write_csv(
        w,
        &MatrixData::Complex(CMatrix::from_column_slice(v.len(), 1, v.as_slice())),
    )
}

/// Reads a one-column CSV (real or `re,im`) as a coefficient vector.
pub fn read_vector_csv<R: Read>(r: R) -> Result<CVector> {
    let m = read_csv(r)?.into_complex();
    if m.ncols() != 1 {
        return Err(Error::Format(format!(
            "expected one column, found {}",
            m.ncols()
        )));
    }
    Ok(m.column(0).into_owned())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
