//! Output files: CSV tables, JSON summaries and the SNSF binary field format.
//!
//! SNSF layout, all little-endian: magic `SNSF`, `u32` version, `u64` node
//! count, `u32` components per node, then `f64` values node-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use surfns::{Error, Result};

use crate::config::RunConfig;

pub const SNSF_MAGIC: &[u8; 4] = b"SNSF";
pub const SNSF_VERSION: u32 = 1;

/// First 16 hex digits of the SHA-256 of the canonical config text.
pub fn run_id(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.hashed_text().as_bytes());
    hex::encode(&digest[..8])
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.into()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_snsf(path: &Path, components: u32, data: &[f64]) -> Result<()> {
    if components == 0 || data.len() % components as usize != 0 {
        return Err(Error::Precondition(format!("{} values do not split into {components} components", data.len())));
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(SNSF_MAGIC)?;
    f.write_all(&SNSF_VERSION.to_le_bytes())?;
    f.write_all(&((data.len() / components as usize) as u64).to_le_bytes())?;
    f.write_all(&components.to_le_bytes())?;
    for x in data {
        f.write_all(&x.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnsfField {
    pub nodes: usize,
    pub components: usize,
    pub data: Vec<f64>,
}

pub fn read_snsf(path: &Path) -> Result<SnsfField> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string()));
    if bytes.len() < 20 || &bytes[..4] != SNSF_MAGIC {
        return Err(bad("not an SNSF file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != SNSF_VERSION {
        return Err(bad(&format!("unsupported SNSF version {version}")));
    }
    let nodes = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let components = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() != nodes * components * 8 {
        return Err(bad("SNSF payload length does not match the header"));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(SnsfField { nodes, components, data })
}
