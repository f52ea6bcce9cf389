//! A checkpoint is a directory holding `manifest.json` and one raw
//! little-endian f32 blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::{build_model, EpochMetrics, ModelInstance, ModelSpec, TrainConfig};
use crate::tensor::{RunningStats, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

/// How the stored parameters were produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: Option<TrainConfig>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
    bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: ModelSpec,
    seed: u64,
    training: TrainingMeta,
    tensors: Vec<TensorEntry>,
}

fn named_tensors(model: &ModelInstance) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    for (name, stats) in model.batch_norm_stats() {
        let c = stats.mean.len();
        let t = |v: &[f32]| Tensor::new(&[c], v.to_vec()).expect("1-d stats");
        out.push((format!("{name}.running_mean"), t(&stats.mean)));
        out.push((format!("{name}.running_var"), t(&stats.var)));
    }
    out
}

pub fn save_checkpoint(model: &ModelInstance, training: &TrainingMeta, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (name, tensor) in named_tensors(model) {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = tensor.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(TensorEntry {
            name,
            shape: tensor.shape().to_vec(),
            file,
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        spec: model.spec().clone(),
        seed: model.spec().seed,
        training: training.clone(),
        tensors: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_blob(dir: &Path, entry: &TensorEntry) -> Result<Tensor> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = entry.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected || entry.bytes != expected {
        return Err(Error::Format(format!(
            "tensor {}: blob {} has {} bytes, expected {expected}",
            entry.name,
            entry.file,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(&entry.shape, data)
}

/// Rebuilds the model from its spec, then overwrites every parameter and
/// batch-norm statistic from the blobs.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelInstance, TrainingMeta)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {} (this build reads {CHECKPOINT_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut model = build_model(&manifest.spec)?;
    let expected = named_tensors(&model);
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, model has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let n_params = model.params().len();
    let bn_names: Vec<String> = model.batch_norm_stats().map(|(n, _)| n.to_string()).collect();
    let mut loaded = Vec::with_capacity(expected.len());
    for ((name, want), entry) in expected.iter().zip(&manifest.tensors) {
        if &entry.name != name {
            return Err(Error::Format(format!("expected tensor {name}, found {}", entry.name)));
        }
        if entry.shape != want.shape() {
            return Err(Error::shape(
                "checkpoint",
                format!(
                    "tensor {name} stored as {:?}, model expects {:?}",
                    entry.shape,
                    want.shape()
                ),
            ));
        }
        loaded.push(read_blob(dir, entry)?);
    }
    let mut rest = loaded.split_off(n_params);
    for (p, t) in model.params_mut().iter_mut().zip(loaded) {
        p.value = t;
    }
    for (i, name) in bn_names.iter().enumerate().rev() {
        let var = rest.pop().expect("var blob");
        let mean = rest.pop().expect("mean blob");
        debug_assert_eq!(rest.len(), 2 * i);
        model.set_batch_norm_stats(
            name,
            RunningStats {
                mean: mean.into_data(),
                var: var.into_data(),
            },
        )?;
    }
    Ok((model, manifest.training))
}
