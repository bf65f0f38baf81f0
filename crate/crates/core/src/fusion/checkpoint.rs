//! Checkpoint container.
//!
//! ```text
//! "FFSC" | u32 LE version (=1) | u64 LE metadata length | metadata (UTF-8 JSON)
//!        | u64 LE parameter count | f32 LE parameters in flat-vector order
//! ```
//! The metadata object holds `architecture` and `provenance`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::error::{Error, Result};
use crate::nn::{Architecture, Model};

pub const MAGIC: &[u8; 4] = b"FFSC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub provenance: Provenance,
}

pub fn encode(model: &Model, provenance: &Provenance) -> Vec<u8> {
    let meta = CheckpointMeta {
        architecture: model.architecture(),
        provenance: provenance.clone(),
    };
    let json = serde_json::to_vec(&meta).expect("plain struct");
    let params = model.param_vector();
    let mut out = Vec::with_capacity(4 + 4 + 8 + json.len() + 8 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.corrupt(format!("truncated {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Header only; cheap even for large payloads.
pub fn decode_meta(bytes: &[u8], path: &Path) -> Result<CheckpointMeta> {
    let mut r = Reader { bytes, at: 0, path };
    decode_header(&mut r)
}

fn decode_header(r: &mut Reader<'_>) -> Result<CheckpointMeta> {
    if r.take(4, "magic")? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let len = r.u64("metadata length")?;
    let len = usize::try_from(len).map_err(|_| r.corrupt("metadata length overflows"))?;
    let json = r.take(len, "metadata")?;
    serde_json::from_slice(json).map_err(|e| r.corrupt(format!("metadata: {e}")))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Model, Provenance)> {
    let mut r = Reader { bytes, at: 0, path };
    let meta = decode_header(&mut r)?;
    let mut model =
        Model::from_architecture(&meta.architecture).map_err(|e| r.corrupt(format!("architecture: {e}")))?;
    let count = r.u64("parameter count")?;
    if count != model.param_count() as u64 {
        return Err(r.corrupt(format!(
            "parameter count {count} does not match architecture ({})",
            model.param_count()
        )));
    }
    let payload = r.take(4 * model.param_count(), "parameter payload")?;
    if r.at != bytes.len() {
        return Err(r.corrupt("trailing bytes after payload"));
    }
    let params: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    model.set_params(&params)?;
    Ok((model, meta.provenance))
}
