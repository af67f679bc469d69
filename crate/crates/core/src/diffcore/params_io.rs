//! `.params` files: one line of JSON describing the parameter layout,
//! followed by the raw parameters as little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpArch;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "ecbench-params/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub offset: usize,
    pub arch: MlpArch,
}

/// A contiguous run of parameters that is not a network (learned masses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub format: String,
    pub count: usize,
    pub networks: Vec<NetworkEntry>,
    #[serde(default)]
    pub blocks: Vec<BlockEntry>,
}

impl ParamsHeader {
    pub fn new(count: usize) -> Self {
        ParamsHeader {
            format: PARAMS_FORMAT.to_string(),
            count,
            networks: Vec::new(),
            blocks: Vec::new(),
        }
    }
}

pub fn encode_params(header: &ParamsHeader, values: &[f64]) -> Result<Vec<u8>> {
    if header.count != values.len() {
        return Err(Error::Shape(format!(
            "header declares {} parameters, got {}",
            header.count,
            values.len()
        )));
    }
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8], path: &str) -> Result<(ParamsHeader, Vec<f64>)> {
    let bad = |reason: &str| Error::Format { path: path.to_string(), reason: reason.to_string() };
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header: ParamsHeader = serde_json::from_slice(&bytes[..nl])?;
    if header.format != PARAMS_FORMAT {
        return Err(bad(&format!("unknown format tag {:?}", header.format)));
    }
    let body = &bytes[nl + 1..];
    if body.len() != header.count * 8 {
        return Err(bad(&format!(
            "expected {} bytes of parameters, found {}",
            header.count * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

pub fn write_params(path: &Path, header: &ParamsHeader, values: &[f64]) -> Result<()> {
    let bytes = encode_params(header, values)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<(ParamsHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    decode_params(&bytes, &path.display().to_string())
}
