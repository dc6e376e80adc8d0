//! Checkpoint container: a one-line JSON header (config, counters, best
//! metrics, frozen names, and an array name/shape/offset table) followed by
//! the raw little-endian `f32` payloads. Round-trips are bit-exact.

use crate::vit::params::ParameterSet;
use crate::vit::train::Checkpoint;
use crate::vit::{ViTConfig, VitError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "amc-checkpoint";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ViTConfig,
    epoch: usize,
    adam_t: u64,
    best_val_loss: Option<f64>,
    best_val_acc: Option<f64>,
    frozen: Vec<String>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Byte offset into the payload that follows the header line.
    offset: u64,
    /// Element count (`rows * cols`).
    len: usize,
}

fn push_arrays(
    prefix: &str,
    set: &ParameterSet<f32>,
    entries: &mut Vec<ArrayEntry>,
    payload: &mut Vec<u8>,
) {
    for (name, data) in set.iter() {
        let offset = payload.len() as u64;
        for &v in data.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let (rows, cols) = data.dim();
        entries.push(ArrayEntry {
            name: format!("{prefix}{name}"),
            rows,
            cols,
            offset,
            len: rows * cols,
        });
    }
}

fn read_arrays(
    prefix: &str,
    set: &mut ParameterSet<f32>,
    entries: &[ArrayEntry],
    payload: &[u8],
) -> Result<(), VitError> {
    for i in 0..set.n_arrays() {
        let want_name = format!("{prefix}{}", set.name(i));
        let entry = entries
            .iter()
            .find(|e| e.name == want_name)
            .ok_or_else(|| VitError::Checkpoint(format!("missing array '{want_name}'")))?;
        let data = set.arr_mut(i);
        if data.dim() != (entry.rows, entry.cols) || entry.len != entry.rows * entry.cols {
            return Err(VitError::Checkpoint(format!(
                "array '{want_name}' has shape {}x{}, config expects {:?}",
                entry.rows,
                entry.cols,
                data.dim()
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len * 4;
        if end > payload.len() {
            return Err(VitError::Checkpoint(format!(
                "array '{want_name}' payload out of bounds"
            )));
        }
        for (value, bytes) in data.iter_mut().zip(payload[start..end].chunks_exact(4)) {
            *value = f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        }
    }
    Ok(())
}

/// Write the checkpoint to disk. The file is header JSON, a newline, then
/// the concatenated array payloads at the offsets recorded in the header.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), VitError> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    push_arrays("", &ckpt.params, &mut entries, &mut payload);
    push_arrays("adam_m.", &ckpt.adam_m, &mut entries, &mut payload);
    push_arrays("adam_v.", &ckpt.adam_v, &mut entries, &mut payload);

    let header = Header {
        format: FORMAT_TAG.to_string(),
        version: CHECKPOINT_VERSION,
        config: ckpt.config,
        epoch: ckpt.epoch,
        adam_t: ckpt.adam_t,
        best_val_loss: ckpt.best_val_loss,
        best_val_acc: ckpt.best_val_acc,
        frozen: ckpt.params.frozen_names(),
        arrays: entries,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| VitError::Checkpoint(format!("header serialization: {e}")))?;

    let mut file = fs::File::create(path)?;
    file.write_all(header_json.as_bytes())?;
    file.write_all(b"\n")?;
    file.write_all(&payload)?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, VitError> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VitError::Checkpoint("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| VitError::Checkpoint(format!("header parse: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(VitError::Checkpoint(format!("unknown format tag '{}'", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(VitError::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    header.config.validate()?;

    let payload = &bytes[newline + 1..];
    let mut params = ParameterSet::<f32>::zeros(&header.config);
    let mut adam_m = params.zeros_like();
    let mut adam_v = params.zeros_like();
    read_arrays("", &mut params, &header.arrays, payload)?;
    read_arrays("adam_m.", &mut adam_m, &header.arrays, payload)?;
    read_arrays("adam_v.", &mut adam_v, &header.arrays, payload)?;
    for name in &header.frozen {
        params.set_frozen_by_name(name, true)?;
    }

    Ok(Checkpoint {
        config: header.config,
        params,
        adam_m,
        adam_v,
        adam_t: header.adam_t,
        epoch: header.epoch,
        best_val_loss: header.best_val_loss,
        best_val_acc: header.best_val_acc,
    })
}
