//! Binary embedding container.
//!
//! Layout (all little-endian): 8-byte magic `DRRLEMB1`, `u32` version,
//! `u32` user count, `u32` item count, `u32` dimension, then every user
//! row followed by every item row as `f32`. Optional tagged sections
//! follow; `MRGN` carries the DrRL margins as a mode byte, a `u32` count
//! and that many `f64` values.

use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::Array2;

use super::{EmbeddingTable, GraphError};
use crate::fsutil::write_atomic;
use crate::losses::{MarginMode, MarginState};

const MAGIC: &[u8; 8] = b"DRRLEMB1";
const VERSION: u32 = 1;
const MARGIN_TAG: &[u8; 4] = b"MRGN";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub table: EmbeddingTable,
    pub margins: Option<MarginState>,
}

fn mode_byte(m: MarginMode) -> u8 {
    match m {
        MarginMode::PerUser => 0,
        MarginMode::Shared => 1,
        MarginMode::Fixed => 2,
    }
}

pub fn encode(table: &EmbeddingTable, margins: Option<&MarginState>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 4 * (table.users.len() + table.items.len()));
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, table.num_users() as u32, table.num_items() as u32, table.dim() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for x in table.users.iter().chain(table.items.iter()) {
        buf.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    if let Some(m) = margins {
        buf.extend_from_slice(MARGIN_TAG);
        buf.push(mode_byte(m.mode));
        buf.extend_from_slice(&(m.values().len() as u32).to_le_bytes());
        for b in m.values() {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    buf
}

pub fn write_checkpoint(path: &Path, table: &EmbeddingTable, margins: Option<&MarginState>) -> Result<(), GraphError> {
    write_atomic(path, &encode(table, margins)).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn truncated(what: &str) -> GraphError {
    GraphError::Format(format!("truncated while reading {what}"))
}

fn read_u32(r: &mut Cursor<&[u8]>, what: &str) -> Result<u32, GraphError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| truncated(what))?;
    Ok(u32::from_le_bytes(b))
}

fn read_rows(r: &mut Cursor<&[u8]>, rows: usize, dim: usize, what: &str) -> Result<Array2<f64>, GraphError> {
    let mut raw = vec![0u8; rows * dim * 4];
    r.read_exact(&mut raw).map_err(|_| truncated(what))?;
    let vals: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((rows, dim), vals).map_err(|e| GraphError::Format(e.to_string()))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, GraphError> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(GraphError::Format("not an embedding checkpoint".into()));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(GraphError::Format(format!("unsupported version {version}")));
    }
    let nu = read_u32(&mut r, "header")? as usize;
    let ni = read_u32(&mut r, "header")? as usize;
    let d = read_u32(&mut r, "header")? as usize;
    let users = read_rows(&mut r, nu, d, "user rows")?;
    let items = read_rows(&mut r, ni, d, "item rows")?;
    let table = EmbeddingTable::new(users, items)?;
    let mut margins = None;
    loop {
        let mut tag = [0u8; 4];
        match r.read(&mut tag) {
            Ok(0) => break,
            Ok(4) => {}
            _ => return Err(truncated("section tag")),
        }
        if &tag != MARGIN_TAG {
            return Err(GraphError::Format(format!("unknown section {:?}", String::from_utf8_lossy(&tag))));
        }
        let mut mb = [0u8; 1];
        r.read_exact(&mut mb).map_err(|_| truncated("margin mode"))?;
        let mode = match mb[0] {
            0 => MarginMode::PerUser,
            1 => MarginMode::Shared,
            2 => MarginMode::Fixed,
            x => return Err(GraphError::Format(format!("unknown margin mode {x}"))),
        };
        let n = read_u32(&mut r, "margin count")? as usize;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| truncated("margins"))?;
            vals.push(f64::from_le_bytes(b));
        }
        margins = Some(MarginState::from_values(mode, vals));
    }
    Ok(Checkpoint { table, margins })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, GraphError> {
    let bytes = std::fs::read(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
