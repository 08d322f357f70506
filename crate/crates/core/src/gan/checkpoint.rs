//! Checkpoint container and training-manifest files.
//!
//! A checkpoint is a self-describing binary: magic, a JSON header echoing
//! the full config, the checkpoint metadata and the array directory, then
//! the named weight arrays as little-endian 32-bit reals in directory
//! order. Loading rebuilds the architecture from the config echo and
//! fills parameters by name, so a file is sufficient to sample from.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, GanConfig, GanModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SBGANCK1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: u32,
    config: GanConfig,
    checkpoint: Checkpoint,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

/// Write the model's weights plus metadata to `path`.
pub fn save_checkpoint(model: &mut GanModel, meta: &Checkpoint, path: &Path) -> Result<()> {
    let config = model.config().clone();
    let params = model.named_params_mut();
    let arrays: Vec<ArrayEntry> = params
        .iter()
        .map(|(name, p)| ArrayEntry { name: name.clone(), shape: p.value.shape().to_vec() })
        .collect();
    let header = Header { format: 1, config, checkpoint: meta.clone(), arrays };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header serialization: {e}")))?;

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |buf: &[u8]| file.write_all(buf).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(header_json.len() as u32).to_le_bytes())?;
    write(&header_json)?;
    for (_, p) in &params {
        let mut buf = Vec::with_capacity(p.value.len() * 4);
        for v in p.value.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        write(&buf)?;
    }
    Ok(())
}

/// Rebuild a model and its metadata from a checkpoint container.
pub fn load_checkpoint(path: &Path) -> Result<(GanModel, Checkpoint)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint container (bad magic)".into()));
    }
    let mut len_buf = [0u8; 4];
    file.read_exact(&mut len_buf).map_err(|e| Error::io(path, e))?;
    let header_len = u32::from_le_bytes(len_buf) as usize;
    let mut header_buf = vec![0u8; header_len];
    file.read_exact(&mut header_buf).map_err(|e| Error::io(path, e))?;
    let header: Header =
        serde_json::from_slice(&header_buf).map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    if header.format != 1 {
        return Err(Error::Format(format!("unsupported checkpoint format {}", header.format)));
    }

    // Architecture comes from the config echo; the init seed is irrelevant
    // because every parameter is overwritten below.
    let mut model = GanModel::new(header.config.clone(), 0)?;
    let mut params = model.named_params_mut();
    if params.len() != header.arrays.len() {
        return Err(Error::Format(format!(
            "array count mismatch: file has {}, architecture has {}",
            header.arrays.len(),
            params.len()
        )));
    }
    for (entry, (name, param)) in header.arrays.iter().zip(params.iter_mut()) {
        if entry.name != *name {
            return Err(Error::Format(format!(
                "array order mismatch: file has {}, architecture expects {name}",
                entry.name
            )));
        }
        if entry.shape != param.value.shape() {
            return Err(Error::Format(format!(
                "array {} shape mismatch: file {:?}, architecture {:?}",
                entry.name,
                entry.shape,
                param.value.shape()
            )));
        }
        let count = param.value.len();
        let mut buf = vec![0u8; count * 4];
        file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        for (i, v) in param.value.iter_mut().enumerate() {
            let b = [buf[4 * i], buf[4 * i + 1], buf[4 * i + 2], buf[4 * i + 3]];
            *v = f64::from(f32::from_le_bytes(b));
        }
    }
    drop(params);
    Ok((model, header.checkpoint))
}

/// Which records a generator was trained on; the leakage guard checks
/// synthetic provenance against these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub model_id: String,
    pub seed: u64,
    pub record_ids: Vec<String>,
}

impl TrainingLog {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("training log serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad training log: {e}")))
    }
}
