//! Model bundle: a directory holding `manifest.json` and `weights.bin`.
//!
//! `weights.bin` concatenates little-endian `f32` parameters in layer order.
//! Each dense layer contributes its `[out, in]` weight followed by its bias,
//! each conv layer its `[out_c, in_c, kh, kw]` weight followed by its bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};
use crate::nn::layer::{LayerSpec, LAYER_KINDS};
use crate::nn::model::{Param, Sequential, Weights};
use crate::tensor::Tensor;

pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub model: Sequential,
    pub weights: Weights<f32>,
}

impl ModelBundle {
    pub fn new(model: Sequential, weights: Weights<f32>) -> Result<Self> {
        weights.validate(&model)?;
        Ok(Self { model, weights })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: BUNDLE_VERSION,
            input_shape: self.model.input_shape().to_vec(),
            classes: self.model.classes(),
            layers: self.model.layers().to_vec(),
        }
    }
}

pub fn encode_weights(weights: &Weights<f32>) -> Vec<u8> {
    weights.tensors().flat_map(|t| t.data().iter().flat_map(|v| v.to_le_bytes())).collect()
}

pub fn decode_weights(model: &Sequential, bytes: &[u8]) -> Result<Weights<f32>> {
    let mut offset = 0;
    let mut params = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let Some((wshape, blen)) = layer.param_shapes() else {
            params.push(None);
            continue;
        };
        let need = 4 * layer.param_count();
        let available = bytes.len() - offset;
        if available < need {
            return Err(Error::ByteCount { layer: i, expected: need, found: available });
        }
        let values: Vec<f32> = bytes[offset..offset + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        offset += need;
        let wlen: usize = wshape.iter().product();
        params.push(Some(Param {
            weight: Tensor::new(wshape, values[..wlen].to_vec())?,
            bias: Tensor::new(vec![blen], values[wlen..].to_vec())?,
        }));
    }
    if offset != bytes.len() {
        let last = model.layers().len() - 1;
        return Err(Error::ByteCount { layer: last, expected: offset, found: bytes.len() });
    }
    Weights::new(model, params)
}

pub fn manifest_from_json(text: &str) -> Result<Manifest> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let version = raw.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: BUNDLE_VERSION });
    }
    if let Some(layers) = raw.get("layers").and_then(serde_json::Value::as_array) {
        for layer in layers {
            let kind = layer.get("kind").and_then(serde_json::Value::as_str).unwrap_or("<missing>");
            if !LAYER_KINDS.contains(&kind) {
                return Err(Error::UnknownLayerKind(kind.to_string()));
            }
        }
    }
    Ok(serde_json::from_value(raw)?)
}

pub fn save_model_bundle(bundle: &ModelBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut manifest = serde_json::to_string_pretty(&bundle.manifest())?;
    manifest.push('\n');
    write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    write_file(&dir.join(WEIGHTS_FILE), &encode_weights(&bundle.weights))
}

pub fn load_model_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let text = String::from_utf8(read_file(&dir.join(MANIFEST_FILE))?)
        .map_err(|_| Error::InvalidParameter("manifest is not UTF-8".into()))?;
    let manifest = manifest_from_json(&text)?;
    let model = Sequential::new(manifest.layers, manifest.input_shape, manifest.classes)?;
    let weights = decode_weights(&model, &read_file(&dir.join(WEIGHTS_FILE))?)?;
    ModelBundle::new(model, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> ModelBundle {
        let model = Sequential::mlp(&[2, 3, 2]).unwrap();
        let mut weights = Weights::zeros(&model);
        let mut k = 0.0f32;
        for t in weights.tensors_mut() {
            for v in t.data_mut() {
                *v = k;
                k += 0.25;
            }
        }
        ModelBundle::new(model, weights).unwrap()
    }

    #[test]
    fn dense_blob_length() {
        let model = Sequential::mlp(&[2, 3]).unwrap();
        assert_eq!(encode_weights(&Weights::zeros(&model)).len(), 36);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        save_model_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_model_bundle(dir.path()).unwrap(), b);
    }

    #[test]
    fn truncated_weights_name_the_layer() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        save_model_bundle(&b, dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = std::fs::read(&path).unwrap();
        // layer 0 holds 9 floats, layer 2 holds 8
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_model_bundle(dir.path()) {
            Err(Error::ByteCount { layer, expected, found }) => assert_eq!((layer, expected, found), (2, 32, 28)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, [bytes.as_slice(), &[0, 0, 0, 0]].concat()).unwrap();
        assert!(matches!(load_model_bundle(dir.path()), Err(Error::ByteCount { .. })));
    }

    #[test]
    fn version_and_kind_checks() {
        let b = bundle();
        let mut m = serde_json::to_value(b.manifest()).unwrap();
        m["format_version"] = 7.into();
        assert!(matches!(manifest_from_json(&m.to_string()), Err(Error::VersionMismatch { found: 7, .. })));
        let mut m = serde_json::to_value(b.manifest()).unwrap();
        m["layers"][1]["kind"] = "gelu".into();
        assert!(matches!(manifest_from_json(&m.to_string()), Err(Error::UnknownLayerKind(k)) if k == "gelu"));
    }
}
