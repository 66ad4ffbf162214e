//! Weight files: a JSON manifest plus a raw little-endian f32 blob.
//!
//! ```json
//! {"blob": "net.bin", "tensors": [{"name": "l1.fwd.w_ih", "shape": [1024, 513],
//!   "dtype": "f32", "byte_offset": 0}, ...]}
//! ```
//!
//! Tensors are stored row-major. The blob lives next to the manifest, named
//! by the manifest's `blob` field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MaskError, MaskNet, MaskNetDims};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightManifest {
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MaskError + '_ {
    move |source| MaskError::Io { path: path.to_path_buf(), source }
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `net` as `<path>` (manifest) and `<path>` with a `.bin` extension
/// (blob).
pub fn save_net(path: impl AsRef<Path>, net: &MaskNet) -> Result<(), MaskError> {
    let path = path.as_ref();
    let blob = blob_path(path);
    let shapes = net.dims().tensor_shapes();
    let mut bytes = Vec::with_capacity(4 * net.num_parameters());
    let mut tensors = Vec::with_capacity(shapes.len());
    for ((name, data), (_, shape)) in net.tensors().into_iter().zip(shapes) {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape,
            dtype: "f32".into(),
            byte_offset: bytes.len(),
        });
        for &v in data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = WeightManifest {
        blob: blob.file_name().and_then(|n| n.to_str()).unwrap_or("weights.bin").to_string(),
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(path, json).map_err(io_err(path))?;
    fs::write(&blob, bytes).map_err(io_err(&blob))?;
    Ok(())
}

fn infer_dims(manifest: &WeightManifest) -> Result<MaskNetDims, MaskError> {
    let shape_of = |name: &str| {
        manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.shape.clone())
            .ok_or_else(|| MaskError::Structure(format!("missing tensor {name}")))
    };
    let w_ih = shape_of("l1.fwd.w_ih")?;
    let l2 = shape_of("l2.w")?;
    let l3 = shape_of("l3.w")?;
    let bad = |name: &str, shape: &[usize]| MaskError::Structure(format!("tensor {name} has rank-invalid shape {shape:?}"));
    if w_ih.len() != 2 || w_ih[0] % 4 != 0 {
        return Err(bad("l1.fwd.w_ih", &w_ih));
    }
    if l2.len() != 2 {
        return Err(bad("l2.w", &l2));
    }
    if l3.len() != 2 {
        return Err(bad("l3.w", &l3));
    }
    Ok(MaskNetDims { input: w_ih[1], hidden: w_ih[0] / 4, ff1: l2[0], ff2: l3[0] })
}

/// Loads a net, inferring its dimensions from the manifest and checking that
/// every tensor is consistent with them.
pub fn load_net(path: impl AsRef<Path>) -> Result<MaskNet, MaskError> {
    load(path.as_ref(), None)
}

/// Loads a net and additionally requires the given dimensions.
pub fn load_net_expecting(path: impl AsRef<Path>, dims: MaskNetDims) -> Result<MaskNet, MaskError> {
    load(path.as_ref(), Some(dims))
}

fn load(path: &Path, expected: Option<MaskNetDims>) -> Result<MaskNet, MaskError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: WeightManifest =
        serde_json::from_str(&text).map_err(|e| MaskError::Structure(format!("manifest: {e}")))?;

    let dims = infer_dims(&manifest)?;
    let shapes = dims.tensor_shapes();
    for entry in &manifest.tensors {
        if !shapes.iter().any(|(n, _)| *n == entry.name) {
            return Err(MaskError::Tensor { tensor: entry.name.clone(), message: "unknown tensor name".into() });
        }
        if entry.dtype != "f32" {
            return Err(MaskError::Tensor {
                tensor: entry.name.clone(),
                message: format!("unsupported dtype {:?}", entry.dtype),
            });
        }
    }
    if let Some(want) = expected {
        if want != dims {
            return Err(MaskError::Structure(format!("network dimensions {dims:?} do not match required {want:?}")));
        }
    }

    let blob_file = path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let blob = fs::read(&blob_file).map_err(io_err(&blob_file))?;
    let mut tensors = Vec::with_capacity(shapes.len());
    let mut used = 0usize;
    for (name, shape) in &shapes {
        let mut found = manifest.tensors.iter().filter(|t| t.name == *name);
        let entry = found
            .next()
            .ok_or_else(|| MaskError::Structure(format!("missing tensor {name}")))?;
        if found.next().is_some() {
            return Err(MaskError::Tensor { tensor: (*name).into(), message: "listed more than once".into() });
        }
        if entry.shape != *shape {
            return Err(MaskError::Structure(format!(
                "tensor {name} has shape {:?}, expected {shape:?} for {dims:?}",
                entry.shape
            )));
        }
        let count: usize = shape.iter().product();
        let end = entry.byte_offset + 4 * count;
        if end > blob.len() {
            return Err(MaskError::Tensor {
                tensor: (*name).into(),
                message: format!("needs bytes {}..{end} but the blob has {} bytes", entry.byte_offset, blob.len()),
            });
        }
        let values: Vec<f64> = blob[entry.byte_offset..end]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        used += 4 * count;
        tensors.push(values);
    }
    if used != blob.len() {
        return Err(MaskError::Structure(format!(
            "manifest accounts for {used} bytes but the blob has {} bytes",
            blob.len()
        )));
    }
    MaskNet::from_tensors(dims, &tensors)
}
