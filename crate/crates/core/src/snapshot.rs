//! SLNSF1 field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                  |
//! |-------|--------------------------|
//! | 6     | magic `SLNSF1`           |
//! | 4     | dim (u32)                |
//! | 4     | N (u32)                  |
//! | 8     | L (f64)                  |
//! | 4     | component count (u32)    |
//! | 8     | time (f64)               |
//! | 8 * C * N^d | values (f64)       |
//!
//! Values are component-major, each component row-major (last axis fastest),
//! which is the in-memory layout of [`Field`].

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::PeriodicGrid;

pub const MAGIC: &[u8; 6] = b"SLNSF1";
const HEADER_LEN: usize = 6 + 4 + 4 + 8 + 4 + 8;

/// A field together with the simulation time it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: Field,
}

pub fn encode(field: &Field, time: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&g.length().to_le_bytes());
    out.extend_from_slice(&(field.components() as u32).to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Snapshot> {
    let bad = |reason: String| Error::Snapshot {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..6] != MAGIC {
        return Err(bad("wrong magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dim = u32_at(6);
    let n = u32_at(10);
    let length = f64_at(14);
    let comps = u32_at(22);
    let time = f64_at(26);
    let grid = PeriodicGrid::new(dim, n, length).map_err(|e| bad(e.to_string()))?;
    let expected = HEADER_LEN + 8 * comps * grid.len();
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = Field::from_values(grid, comps, values).map_err(|e| bad(e.to_string()))?;
    Ok(Snapshot { time, field })
}

pub fn write(path: &Path, field: &Field, time: f64) -> Result<()> {
    fs::write(path, encode(field, time)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// One row per grid point: coordinates, then every component.
pub fn write_csv(path: &Path, field: &Field) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let g = field.grid();
    let axes = ["x", "y", "z"];
    let mut header: Vec<String> = axes[..g.dim()].iter().map(|s| s.to_string()).collect();
    header.extend((0..field.components()).map(|c| format!("f{c}")));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let npts = g.len();
    for idx in 0..npts {
        let p = g.position(idx);
        let mut row: Vec<String> = p[..g.dim()].iter().map(|x| format!("{x:e}")).collect();
        row.extend((0..field.components()).map(|c| format!("{:e}", field.values()[c * npts + idx])));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
