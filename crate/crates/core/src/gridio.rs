//! Binary snapshot format shared with the plotting tools.
//!
//! Layout, all little-endian:
//!
//! | field    | type                         |
//! |----------|------------------------------|
//! | magic    | `b"CPCG"`                    |
//! | version  | `u32` (= 1)                  |
//! | rank     | `u32` (1 or 2)               |
//! | axes     | `rank × (f64 start, f64 spacing, u64 count)` |
//! | payload  | row-major `(f64 re, f64 im)` |

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid1D, ComplexGrid2D};

pub const MAGIC: [u8; 4] = *b"CPCG";
pub const VERSION: u32 = 1;

/// Decoded grid of either rank.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredGrid {
    One(ComplexGrid1D),
    Two(ComplexGrid2D),
}

fn write_header<W: Write>(w: &mut W, axes: &[Axis]) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(axes.len() as u32).to_le_bytes())?;
    for a in axes {
        w.write_all(&a.start.to_le_bytes())?;
        w.write_all(&a.spacing.to_le_bytes())?;
        w.write_all(&(a.count as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_payload<W: Write>(w: &mut W, values: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_grid2d<W: Write>(w: &mut W, grid: &ComplexGrid2D) -> Result<()> {
    write_header(w, &[*grid.eta_axis(), *grid.nu_axis()])?;
    write_payload(w, grid.values())
}

pub fn write_grid1d<W: Write>(w: &mut W, grid: &ComplexGrid1D) -> Result<()> {
    write_header(w, &[*grid.axis()])?;
    write_payload(w, grid.values())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<StoredGrid> {
    let magic: [u8; 4] = read_array(r)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rank = u32::from_le_bytes(read_array(r)?);
    if rank != 1 && rank != 2 {
        return Err(Error::Format(format!("unsupported rank {rank}")));
    }
    let mut axes = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let start = f64::from_le_bytes(read_array(r)?);
        let spacing = f64::from_le_bytes(read_array(r)?);
        let count = u64::from_le_bytes(read_array(r)?);
        let count = usize::try_from(count).map_err(|_| Error::Format("axis too long".into()))?;
        axes.push(Axis::new(start, spacing, count).map_err(|e| Error::Format(e.to_string()))?);
    }
    let n: usize = axes.iter().map(|a| a.count).product();
    let mut raw = vec![0u8; n * 16];
    r.read_exact(&mut raw)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let values: Vec<Complex64> = raw
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let map = |e: Error| Error::Format(e.to_string());
    Ok(match rank {
        1 => StoredGrid::One(ComplexGrid1D::new(axes[0], values).map_err(map)?),
        _ => StoredGrid::Two(ComplexGrid2D::new(axes[0], axes[1], values).map_err(map)?),
    })
}

pub fn save_grid2d(path: &std::path::Path, grid: &ComplexGrid2D) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid2d(&mut f, grid)?;
    f.flush()?;
    Ok(())
}

pub fn load_grid(path: &std::path::Path) -> Result<StoredGrid> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_grid(&mut f)
}
