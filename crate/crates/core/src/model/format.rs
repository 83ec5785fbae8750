//! On-disk model format: a `model.json` manifest describing the layers, plus a
//! `weights.bin` blob of little-endian `f32` values addressed by byte offsets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Conv2d, Dense, Layer, Model, Padding, Pool2d};
use crate::error::{Error, Result};

pub const MODEL_MANIFEST: &str = "model.json";
pub const WEIGHTS_BLOB: &str = "weights.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    input_shape: [usize; 3],
    #[serde(default = "default_blob")]
    weights: String,
    /// Hex SHA-256 of the blob; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights_sha256: Option<String>,
    layers: Vec<LayerSpec>,
}

fn default_blob() -> String {
    WEIGHTS_BLOB.to_string()
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerSpec {
    Dense {
        /// `[inputs, outputs]`.
        weight_shape: [usize; 2],
        weight_offset: usize,
        bias_offset: usize,
    },
    Conv2d {
        /// `[kh, kw, in_channels, out_channels]`.
        kernel_shape: [usize; 4],
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        weight_offset: usize,
        bias_offset: usize,
    },
    Maxpool2d {
        window: usize,
        #[serde(default)]
        stride: Option<usize>,
        #[serde(default)]
        padding: Padding,
    },
    Avgpool2d {
        window: usize,
        #[serde(default)]
        stride: Option<usize>,
        #[serde(default)]
        padding: Padding,
    },
    Relu,
    Flatten,
    Softmax,
}

fn read_f32s(blob: &[u8], layer: usize, offset: usize, count: usize) -> Result<Vec<f32>> {
    let end = offset + count * 4;
    if offset % 4 != 0 {
        return Err(Error::Manifest(format!(
            "layer {layer}: offset {offset} is not 4-byte aligned"
        )));
    }
    let bytes = blob.get(offset..end).ok_or(Error::TruncatedWeights {
        layer,
        start: offset,
        end,
        len: blob.len(),
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MODEL_MANIFEST)
    } else {
        path.to_path_buf()
    }
}

/// Loads a model from a directory holding `model.json`, or from the manifest path itself.
pub fn load_model(path: &Path) -> Result<Model> {
    let manifest_path = manifest_path(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }

    let blob_path = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.weights);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if let Some(expected) = &manifest.weights_sha256 {
        let actual = hex::encode(Sha256::digest(&blob));
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(Error::Checksum {
                expected: expected.clone(),
                actual,
            });
        }
    }

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, spec) in manifest.layers.into_iter().enumerate() {
        layers.push(match spec {
            LayerSpec::Dense {
                weight_shape: [inputs, outputs],
                weight_offset,
                bias_offset,
            } => Layer::Dense(Dense {
                inputs,
                outputs,
                weights: read_f32s(&blob, i, weight_offset, inputs * outputs)?,
                bias: read_f32s(&blob, i, bias_offset, outputs)?,
            }),
            LayerSpec::Conv2d {
                kernel_shape: [kh, kw, cin, cout],
                stride,
                padding,
                weight_offset,
                bias_offset,
            } => Layer::Conv2d(Conv2d {
                kernel_h: kh,
                kernel_w: kw,
                in_channels: cin,
                out_channels: cout,
                weights: read_f32s(&blob, i, weight_offset, kh * kw * cin * cout)?,
                bias: read_f32s(&blob, i, bias_offset, cout)?,
                stride,
                padding,
            }),
            LayerSpec::Maxpool2d {
                window,
                stride,
                padding,
            } => Layer::MaxPool2d(Pool2d {
                window,
                stride: stride.unwrap_or(window),
                padding,
            }),
            LayerSpec::Avgpool2d {
                window,
                stride,
                padding,
            } => Layer::AvgPool2d(Pool2d {
                window,
                stride: stride.unwrap_or(window),
                padding,
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Softmax => Layer::Softmax,
        });
    }
    Model::new(manifest.input_shape, layers)
}

impl Model {
    /// Writes `model.json` and `weights.bin` into `dir`, packing parameters
    /// contiguously in layer order.
    pub fn save(&self, dir: &Path, name: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blob = Vec::with_capacity(self.param_count() * 4);
        let mut push = |values: &[f32]| {
            let at = blob.len();
            for v in values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            at
        };

        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Dense(d) => LayerSpec::Dense {
                    weight_shape: [d.inputs, d.outputs],
                    weight_offset: push(&d.weights),
                    bias_offset: push(&d.bias),
                },
                Layer::Conv2d(c) => LayerSpec::Conv2d {
                    kernel_shape: [c.kernel_h, c.kernel_w, c.in_channels, c.out_channels],
                    stride: c.stride,
                    padding: c.padding,
                    weight_offset: push(&c.weights),
                    bias_offset: push(&c.bias),
                },
                Layer::MaxPool2d(p) => LayerSpec::Maxpool2d {
                    window: p.window,
                    stride: Some(p.stride),
                    padding: p.padding,
                },
                Layer::AvgPool2d(p) => LayerSpec::Avgpool2d {
                    window: p.window,
                    stride: Some(p.stride),
                    padding: p.padding,
                },
                Layer::Relu => LayerSpec::Relu,
                Layer::Flatten => LayerSpec::Flatten,
                Layer::Softmax => LayerSpec::Softmax,
            })
            .collect();

        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            name: name.map(str::to_string),
            input_shape: self.input_shape,
            weights: WEIGHTS_BLOB.to_string(),
            weights_sha256: Some(hex::encode(Sha256::digest(&blob))),
            layers,
        };
        let blob_path = dir.join(WEIGHTS_BLOB);
        fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
        let manifest_path = dir.join(MODEL_MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, manifest: &str, blob: &[f32]) {
        fs::write(dir.join(MODEL_MANIFEST), manifest).unwrap();
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(WEIGHTS_BLOB), bytes).unwrap();
    }

    const IDENTITY: &str = r#"{
        "format_version": 1,
        "input_shape": [1, 1, 2],
        "layers": [
            {"kind": "dense", "weight_shape": [2, 2], "weight_offset": 0, "bias_offset": 16}
        ]
    }"#;

    #[test]
    fn loads_identity_dense() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), IDENTITY, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let m = load_model(tmp.path()).unwrap();
        assert_eq!(m.neuron_count(), 2);
        assert_eq!(m.params().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn truncated_blob_names_layer() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), IDENTITY, &[1.0, 0.0, 0.0, 1.0, 0.0]);
        let err = load_model(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::TruncatedWeights { layer: 0, end: 24, len: 20, .. }), "{err}");
    }

    #[test]
    fn conv_channel_mismatch_is_shape_error() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = r#"{
            "format_version": 1,
            "input_shape": [4, 4, 1],
            "layers": [
                {"kind": "conv2d", "kernel_shape": [3, 3, 3, 1], "weight_offset": 0, "bias_offset": 108}
            ]
        }"#;
        write(tmp.path(), manifest, &[0.0; 28]);
        let err = load_model(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::LayerShape { layer: 0, .. }), "{err}");
    }

    #[test]
    fn malformed_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), r#"{"format_version": 1, "layers": [{"kind": "lstm"}]}"#, &[]);
        assert!(matches!(load_model(tmp.path()), Err(Error::Manifest(_))));
    }

    #[test]
    fn stale_blob_detected_by_checksum() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), IDENTITY, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let m = load_model(tmp.path()).unwrap();
        m.save(tmp.path(), Some("id")).unwrap();
        fs::write(tmp.path().join(WEIGHTS_BLOB), [0u8; 24]).unwrap();
        assert!(matches!(load_model(tmp.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn save_then_load_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let weights = [0.1f32, -2.5e-8, f32::MIN_POSITIVE, 1.0, 3.0, -0.0];
        write(tmp.path(), IDENTITY, &weights);
        let m = load_model(tmp.path()).unwrap();
        let out = tmp.path().join("copy");
        m.save(&out, None).unwrap();
        let back = load_model(&out.join(MODEL_MANIFEST)).unwrap();
        let bits: Vec<u32> = back.params().map(f32::to_bits).collect();
        assert_eq!(bits, weights.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
