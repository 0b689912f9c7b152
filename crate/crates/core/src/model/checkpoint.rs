//! Binary checkpoint format.
//!
//! ```text
//! "CCDCKPT\0"
//! u32 header_len, header JSON
//! u32 n_tensors
//! per tensor (name order): u32 name_len, name, u32 rank, u64 dims..., f32 values (LE)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::anticipation::AnticipationModel;
use super::config::ModelConfig;
use crate::error::{bail, Error, Result};

const MAGIC: &[u8; 8] = b"CCDCKPT\0";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    /// Free-form provenance (role, seed, epoch, ...).
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn save_checkpoint(
    model: &AnticipationModel,
    vocab_hash: &str,
    meta: BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config: model.config().clone(),
        vocab_hash: vocab_hash.to_string(),
        meta,
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let json = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, var) in model.params().iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(var.rank() as u32).to_le_bytes());
        for d in var.dims() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for x in var.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()? {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            bail!(Data, "truncated checkpoint");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, BTreeMap<String, Tensor>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        bail!(Data, "{} is not a checkpoint", path.display());
    }
    let n = c.u32()? as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(c.take(n)?).map_err(|e| Error::Data(format!("checkpoint header: {e}")))?;
    if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        bail!(
            Version,
            "checkpoint schema {} (expected {CHECKPOINT_SCHEMA_VERSION})",
            header.schema_version
        );
    }
    let count = c.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let n = c.u32()? as usize;
        let name = String::from_utf8(c.take(n)?.to_vec()).map_err(|e| Error::Data(e.to_string()))?;
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| Ok(c.u64()? as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let values: Vec<f32> = c
            .take(len * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(name, Tensor::from_vec(values, dims, &Device::Cpu)?);
    }
    if c.pos != buf.len() {
        bail!(Data, "trailing bytes in checkpoint");
    }
    Ok((header, tensors))
}

/// Loads a checkpoint, rejecting it if its vocabulary hash differs from `vocab_hash`
/// (when given).
pub fn load_checkpoint(path: &Path, vocab_hash: Option<&str>) -> Result<(AnticipationModel, CheckpointHeader)> {
    let (header, tensors) = read_checkpoint(path)?;
    if let Some(h) = vocab_hash {
        if h != header.vocab_hash {
            bail!(Config, "checkpoint vocabulary {} does not match corpus vocabulary {h}", header.vocab_hash);
        }
    }
    let model = AnticipationModel::new(header.config.clone(), 0, DType::F32, &Device::Cpu)?;
    model.params().load(&tensors)?;
    Ok((model, header))
}
