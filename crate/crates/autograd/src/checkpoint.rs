//! Parameter checkpoints.
//!
//! A checkpoint directory holds two files:
//!
//! * `params.bin` — every tensor's values concatenated as little-endian f64,
//! * `manifest.json` — tensor names, shapes, byte offsets, and a hash of the
//!   model configuration that produced them.
//!
//! Loading verifies the configuration hash (when given) and requires the
//! stored tensor set to match the live parameter store exactly — same names,
//! same shapes. Files are written to a temporary name and renamed into place
//! so a crash cannot leave a half-written archive behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::param::ParamStore;

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset into `params.bin`.
    pub offset: u64,
    /// Number of f64 values.
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Write every parameter in registration order.
pub fn save(dir: &Path, store: &ParamStore, config_hash: &str) -> Result<(), TensorError> {
    fs::create_dir_all(dir)?;
    let mut payload: Vec<u8> = Vec::with_capacity(store.value_count() * 8);
    let mut tensors = Vec::with_capacity(store.len());
    for p in store.iter() {
        let (rows, cols) = p.tensor.shape();
        tensors.push(TensorEntry {
            name: p.name.clone(),
            rows,
            cols,
            offset: payload.len() as u64,
            len: p.tensor.len() as u64,
        });
        for v in p.tensor.values().iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        config_hash: config_hash.to_string(),
        tensors,
    };
    write_atomic(&dir.join(PARAMS_FILE), &payload)?;
    write_atomic(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, TensorError> {
    let raw = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Load a checkpoint back into a live store built from the same configuration.
pub fn load_into(
    dir: &Path,
    store: &ParamStore,
    expected_hash: Option<&str>,
) -> Result<Manifest, TensorError> {
    let manifest = read_manifest(dir)?;
    if let Some(expected) = expected_hash {
        if manifest.config_hash != expected {
            return Err(TensorError::Checkpoint(format!(
                "config hash mismatch: checkpoint has {}, expected {}",
                manifest.config_hash, expected
            )));
        }
    }
    if manifest.tensors.len() != store.len() {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint stores {} tensors, model has {}",
            manifest.tensors.len(),
            store.len()
        )));
    }
    let payload = fs::read(dir.join(PARAMS_FILE))?;
    for entry in &manifest.tensors {
        let param = store
            .get(&entry.name)
            .map_err(|_| TensorError::Checkpoint(format!("unknown tensor {:?}", entry.name)))?;
        let (rows, cols) = param.tensor.shape();
        if rows != entry.rows || cols != entry.cols {
            return Err(TensorError::Checkpoint(format!(
                "tensor {:?} is {}x{} in the checkpoint but {}x{} in the model",
                entry.name, entry.rows, entry.cols, rows, cols
            )));
        }
        let start = entry.offset as usize;
        let nbytes = entry.len as usize * 8;
        let slice = payload.get(start..start + nbytes).ok_or_else(|| {
            TensorError::Checkpoint(format!("tensor {:?} extends past params.bin", entry.name))
        })?;
        let values: Vec<f64> = slice
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        param.tensor.set_values(&values)?;
    }
    Ok(manifest)
}
