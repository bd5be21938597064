//! Binary container for dense matrices and coefficient fields, plus the
//! lossless CSV export and a small PGM raster writer for figures.
//!
//! Layout: magic `ITOM`, u32 version, u32 kind, u64 rows, u64 cols, then
//! the row-major f64 payload, all little-endian.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::fem::{ItoKind, ItoMatrix};
use crate::grid::ConductivityField;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ITOM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Dtn,
    Albedo,
    Field,
}

impl ContainerKind {
    fn code(self) -> u32 {
        match self {
            ContainerKind::Dtn => 1,
            ContainerKind::Albedo => 2,
            ContainerKind::Field => 3,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(ContainerKind::Dtn),
            2 => Ok(ContainerKind::Albedo),
            3 => Ok(ContainerKind::Field),
            other => Err(Error::BadFormat(format!("unknown container kind {other}"))),
        }
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, kind: ContainerKind) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&kind.code().to_le_bytes())?;
    f.write_all(&(m.nrows() as u64).to_le_bytes())?;
    f.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            f.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, ContainerKind)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadFormat("bad magic, not an ITOM file".into()));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::BadFormat(format!("unsupported version {version}")));
    }
    f.read_exact(&mut u32buf)?;
    let kind = ContainerKind::from_code(u32::from_le_bytes(u32buf))?;
    let mut u64buf = [0u8; 8];
    f.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    f.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf) as usize;
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    let mut val = [0u8; 8];
    for i in 0..rows {
        for j in 0..cols {
            f.read_exact(&mut val)?;
            m[(i, j)] = f64::from_le_bytes(val);
        }
    }
    Ok((m, kind))
}

pub fn write_ito(path: &Path, ito: &ItoMatrix) -> Result<()> {
    let kind = match ito.kind {
        ItoKind::Dtn => ContainerKind::Dtn,
        ItoKind::Albedo => ContainerKind::Albedo,
    };
    write_matrix(path, &ito.entries, kind)
}

pub fn write_field(path: &Path, field: &ConductivityField) -> Result<()> {
    let r = field.resolution();
    let m = DMatrix::from_fn(r, r, |i, j| field.value_at(j, i));
    write_matrix(path, &m, ContainerKind::Field)
}

pub fn read_field(path: &Path) -> Result<ConductivityField> {
    let (m, kind) = read_matrix(path)?;
    if kind != ContainerKind::Field {
        return Err(Error::BadFormat("container does not hold a field".into()));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::BadFormat("field container must be square".into()));
    }
    let r = m.nrows();
    let mut values = vec![0.0; r * r];
    for py in 0..r {
        for px in 0..r {
            values[py * r + px] = m[(py, px)];
        }
    }
    ConductivityField::new(r, values)
}

/// Lossless CSV: one matrix row per line, values printed with Rust's
/// shortest round-trip formatting.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&format!("{}", m[(i, j)]));
        }
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::BadFormat(format!("bad csv number: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::BadFormat("empty csv".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::BadFormat("ragged csv".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Grayscale P5 raster of a value grid, min-max normalized. `values` is
/// row-major with row 0 rendered at the bottom.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-300);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    for row in (0..height).rev() {
        for col in 0..width {
            let v = values[row * width + col];
            let g = ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
            f.write_all(&[g])?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Log-magnitude raster of a matrix, for operator heatmaps.
pub fn write_matrix_pgm(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let vals: Vec<f64> = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (m[(i, j)].abs() + 1e-16).log10()))
        .collect();
    // Matrix rows render top-down.
    let flipped: Vec<f64> = (0..m.nrows())
        .rev()
        .flat_map(|i| vals[i * m.ncols()..(i + 1) * m.ncols()].to_vec())
        .collect();
    write_pgm(path, m.ncols(), m.nrows(), &flipped)
}
