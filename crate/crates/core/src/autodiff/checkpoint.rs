use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::Array;
use super::params::ParameterStore;
use crate::error::{EmrError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: usize,
}

/// Writes `manifest.json` and a little-endian `f64` blob into `dir`.
pub fn save_parameters(store: &ParameterStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut manifest = Vec::with_capacity(store.len());
    for id in store.ids() {
        let value = store.value(id);
        manifest.push(ManifestEntry {
            name: store.name(id).to_string(),
            shape: value.shape().to_vec(),
            dtype: "f64".into(),
            offset: blob.len(),
        });
        for v in value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

/// Loads values into an already-built store. Names and shapes must match
/// one to one.
pub fn load_parameters(store: &mut ParameterStore, dir: &Path) -> Result<()> {
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let blob = fs::read(dir.join(BLOB_FILE))?;
    if manifest.len() != store.len() {
        return Err(EmrError::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            manifest.len(),
            store.len()
        )));
    }
    for entry in &manifest {
        if entry.dtype != "f64" {
            return Err(EmrError::Checkpoint(format!(
                "`{}` has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let id = store
            .id(&entry.name)
            .map_err(|_| EmrError::Checkpoint(format!("unexpected parameter `{}`", entry.name)))?;
        let expected = store.value(id).shape().to_vec();
        if expected != entry.shape {
            return Err(EmrError::Checkpoint(format!(
                "`{}` has shape {:?}, model expects {:?}",
                entry.name, entry.shape, expected
            )));
        }
        let n: usize = entry.shape.iter().product();
        let end = entry.offset + n * 8;
        let bytes = blob.get(entry.offset..end).ok_or_else(|| {
            EmrError::Checkpoint(format!("blob truncated while reading `{}`", entry.name))
        })?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        *store.value_mut(id) = Array::new(entry.shape.clone(), data);
    }
    Ok(())
}
