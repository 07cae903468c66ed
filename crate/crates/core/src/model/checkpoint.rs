//! Directory checkpoints: `manifest.json` describing every tensor plus
//! `params.bin` holding the values as little-endian f64.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::math::{Matrix, ParamTensor};

use super::params::{HyperParams, ModelParams, Vocab};

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into `params.bin`, in values.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub hyper: HyperParams,
    pub labels: Vec<String>,
    pub seed: u64,
    pub vocab: Vec<String>,
    pub unk: usize,
    pub embeddings_trainable: bool,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Writes `params` into directory `dir` (created if missing).
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    params: &ModelParams,
    seed: u64,
    metadata: BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut offset = 0;
    let mut entries = Vec::with_capacity(params.tensors.len());
    let mut bytes = Vec::with_capacity(params.parameter_count() * 8);
    for t in &params.tensors {
        entries.push(TensorEntry {
            name: t.name.clone(),
            rows: t.value.rows(),
            cols: t.value.cols(),
            offset,
        });
        offset += t.value.len();
        for v in t.value.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        hyper: params.hyper,
        labels: LabelSpace::names(),
        seed,
        vocab: params.vocab.words().to_vec(),
        unk: params.vocab.unk(),
        embeddings_trainable: params.embeddings_trainable,
        tensors: entries,
        metadata,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join(PARAMS), bytes)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| ckpt_err(&path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ckpt_err(&path, e.to_string()))
}

/// Loads a checkpoint, checking tensor names, shapes and label order
/// against what the stored hyperparameters imply.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelParams, Manifest)> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mpath: PathBuf = dir.join(MANIFEST);
    if manifest.version != FORMAT_VERSION {
        return Err(ckpt_err(&mpath, format!("unsupported version {}", manifest.version)));
    }
    if manifest.labels != LabelSpace::names() {
        return Err(ckpt_err(&mpath, "label order differs from this build"));
    }
    manifest.hyper.validate()?;
    if manifest.unk >= manifest.vocab.len() {
        return Err(ckpt_err(&mpath, "unknown-word row outside vocabulary"));
    }
    let expected = manifest.hyper.tensor_shapes(manifest.vocab.len());
    if expected.len() != manifest.tensors.len() {
        return Err(ckpt_err(
            &mpath,
            format!("expected {} tensors, found {}", expected.len(), manifest.tensors.len()),
        ));
    }

    let ppath = dir.join(PARAMS);
    let bytes = fs::read(&ppath).map_err(|e| ckpt_err(&ppath, e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(ckpt_err(&ppath, "length is not a multiple of 8"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut tensors = Vec::with_capacity(expected.len());
    for ((name, rows, cols), entry) in expected.into_iter().zip(&manifest.tensors) {
        if entry.name != name || (entry.rows, entry.cols) != (rows, cols) {
            return Err(ckpt_err(
                &mpath,
                format!(
                    "tensor `{}` is {}x{}, expected `{name}` {rows}x{cols}",
                    entry.name, entry.rows, entry.cols
                ),
            ));
        }
        let end = entry.offset + rows * cols;
        if end > values.len() {
            return Err(ckpt_err(&ppath, format!("tensor `{name}` runs past end of file")));
        }
        let m = Matrix::from_vec(rows, cols, values[entry.offset..end].to_vec())?;
        tensors.push(ParamTensor::new(name, m));
    }
    let params = ModelParams {
        hyper: manifest.hyper,
        vocab: Vocab::new(manifest.vocab.clone(), manifest.unk),
        tensors,
        embeddings_trainable: manifest.embeddings_trainable,
    };
    Ok((params, manifest))
}
