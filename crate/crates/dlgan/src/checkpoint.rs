//! Checkpoint directories: `model.safetensors` with every parameter and
//! buffer as little-endian f32, plus `manifest.json`.

use std::collections::BTreeMap;
use std::path::Path;

use dlgan_core::label::LabelSchema;
use dlgan_core::model::{ModelBundle, ModelConfig};
use dlgan_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub checkpoint_id: String,
    pub schema: LabelSchema,
    pub d_attr: usize,
    pub image_shape: [usize; 3],
    pub step: usize,
    pub config_hash: String,
    pub model: ModelConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a value's JSON serialization.
pub fn config_hash<S: Serialize>(value: &S) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

/// Serialized weights of the bundle.
pub fn weights_bytes(bundle: &ModelBundle<f32>) -> Result<Vec<u8>> {
    let tensors = bundle.params.tensors();
    let raw: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, t)| (name.clone(), t.shape().to_vec(), t.data().iter().flat_map(|v| v.to_le_bytes()).collect()))
        .collect();
    let views = raw
        .iter()
        .map(|(name, shape, bytes)| Ok((name.as_str(), TensorView::new(Dtype::F32, shape.clone(), bytes)?)))
        .collect::<Result<Vec<_>, safetensors::SafeTensorError>>()
        .map_err(|e| AppError::Checkpoint(e.to_string()))?;
    safetensors::serialize(views, None).map_err(|e| AppError::Checkpoint(e.to_string()))
}

/// Writes `dir` atomically: the files go to a sibling temporary directory
/// that is renamed into place. Returns the manifest.
pub fn save(dir: &Path, bundle: &ModelBundle<f32>, step: usize, config_hash: &str) -> Result<Manifest> {
    let weights = weights_bytes(bundle)?;
    let manifest = Manifest {
        checkpoint_id: format!("ckpt-{}", &sha256_hex(&weights)[..16]),
        schema: bundle.schema.clone(),
        d_attr: bundle.config.attribute_dim,
        image_shape: bundle.image_shape(),
        step,
        config_hash: config_hash.to_string(),
        model: bundle.config.clone(),
    };
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    let name = dir.file_name().ok_or_else(|| AppError::Usage(format!("bad checkpoint path {}", dir.display())))?;
    let tmp = parent.join(format!(".{}.tmp", name.to_string_lossy()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    let wpath = tmp.join(WEIGHTS_FILE);
    std::fs::write(&wpath, &weights).map_err(|e| AppError::io(&wpath, e))?;
    let mpath = tmp.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| AppError::json("manifest", e))?;
    std::fs::write(&mpath, text).map_err(|e| AppError::io(&mpath, e))?;
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::rename(&tmp, dir).map_err(|e| AppError::io(dir, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::json(path.display().to_string(), e))
}

/// Loads and validates a checkpoint: every expected tensor must be present
/// with its exact shape, no extra tensors, and the manifest must agree with
/// the model configuration.
pub fn load(dir: &Path) -> Result<(ModelBundle<f32>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let m = &manifest;
    if m.d_attr != m.model.attribute_dim || m.image_shape != [m.model.image_height, m.model.image_width, 3] {
        return Err(AppError::Checkpoint("manifest d_attr or image_shape disagrees with the model config".into()));
    }
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = std::fs::read(&wpath).map_err(|e| AppError::io(&wpath, e))?;
    let expected_id = format!("ckpt-{}", &sha256_hex(&bytes)[..16]);
    if expected_id != m.checkpoint_id {
        return Err(AppError::Checkpoint(format!("weights hash {expected_id} does not match manifest {}", m.checkpoint_id)));
    }
    let st = SafeTensors::deserialize(&bytes).map_err(|e| AppError::Checkpoint(e.to_string()))?;
    let mut bundle = ModelBundle::<f32>::new(m.model.clone(), m.schema.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected: BTreeMap<String, Vec<usize>> = bundle.expected_shapes()?.into_iter().collect();
    for name in st.names() {
        if !expected.contains_key(name) {
            return Err(AppError::Checkpoint(format!("unexpected tensor {name}")));
        }
    }
    for (name, shape) in &expected {
        let view = st.tensor(name).map_err(|_| AppError::Checkpoint(format!("missing tensor {name}")))?;
        if view.dtype() != Dtype::F32 {
            return Err(AppError::Checkpoint(format!("tensor {name} has dtype {:?}, expected F32", view.dtype())));
        }
        if view.shape() != shape.as_slice() {
            return Err(AppError::Checkpoint(format!("tensor {name} has shape {:?}, expected {shape:?}", view.shape())));
        }
        let data: Vec<f32> =
            view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AppError::Checkpoint(format!("tensor {name} has non-finite values")));
        }
        let t = Tensor::from_vec(shape, data)?;
        let slot =
            if bundle.params.is_buffer(name) { bundle.params.buffer_mut(name)? } else { bundle.params.param_mut(name)? };
        *slot = t;
    }
    bundle.checkpoint_id = m.checkpoint_id.clone();
    Ok((bundle, manifest))
}
