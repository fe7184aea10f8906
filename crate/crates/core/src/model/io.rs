//! Model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "BANETMDL"
//! 8       4     format version (u32, currently 1)
//! 12      4     header length H in bytes (u32)
//! 16      H     UTF-8 JSON header: {"spec", "seed", "param_count", "normalizer"}
//! 16+H    8·N   N = param_count parameters as f64, in slot order
//! ```
//!
//! The slot order is the construction order of the architecture, so a file
//! is only meaningful together with the `spec` in its header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, Model, ModelSpec};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 8] = b"BANETMDL";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: ModelSpec,
    seed: u64,
    param_count: usize,
    normalizer: Option<Normalizer>,
}

pub fn encode_model(model: &Model, normalizer: Option<&Normalizer>) -> Vec<u8> {
    let header = Header {
        spec: model.spec().clone(),
        seed: model.seed(),
        param_count: model.param_count(),
        normalizer: normalizer.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.params().values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(Model, Option<Normalizer>)> {
    let fmt = |m: &str| Error::Format(format!("model file: {m}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fmt("missing magic header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fmt(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| fmt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| fmt(&e.to_string()))?;
    let raw = &bytes[16 + hlen..];
    if raw.len() != 8 * header.param_count {
        return Err(fmt(&format!(
            "expected {} parameter bytes, found {}",
            8 * header.param_count,
            raw.len()
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut model = build_model(&header.spec, header.seed)?;
    model
        .set_params(values)
        .map_err(|_| fmt("parameter count does not match the architecture"))?;
    Ok((model, header.normalizer))
}

pub fn save_model(path: &Path, model: &Model, normalizer: Option<&Normalizer>) -> Result<()> {
    write_atomic(path, &encode_model(model, normalizer))
}

pub fn load_model(path: &Path) -> Result<(Model, Option<Normalizer>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
