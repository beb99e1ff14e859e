//! Model persistence: a JSON header line describing the layer stack,
//! then a little-endian f64 blob of all tensors (parameters plus
//! BatchNorm running statistics) in layer order.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, Model};
use super::tensor::Tensor;
use super::NnError;

/// Shape-level description of one layer, enough to rebuild it with
/// zeroed tensors before loading the blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Embedding { vocab: usize, dim: usize },
    Conv1d { k: usize, c_in: usize, c_out: usize },
    Conv2d { k: usize, c_in: usize, c_out: usize, stride: usize, padding: usize },
    ConvTranspose2d { c_in: usize, k: usize, c_out: usize, stride: usize, padding: usize },
    Dense { d_in: usize, d_out: usize },
    MaxOverTime,
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    Softmax,
    BatchNorm { c: usize, eps: f64, momentum: f64 },
    Dropout { rate: f64 },
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Embedding { table } => {
                LayerSpec::Embedding { vocab: table.shape[0], dim: table.shape[1] }
            }
            Layer::Conv1d { weight, .. } => LayerSpec::Conv1d {
                k: weight.shape[0],
                c_in: weight.shape[1],
                c_out: weight.shape[2],
            },
            Layer::Conv2d { weight, stride, padding, .. } => LayerSpec::Conv2d {
                k: weight.shape[0],
                c_in: weight.shape[2],
                c_out: weight.shape[3],
                stride: *stride,
                padding: *padding,
            },
            Layer::ConvTranspose2d { weight, stride, padding, .. } => LayerSpec::ConvTranspose2d {
                c_in: weight.shape[0],
                k: weight.shape[1],
                c_out: weight.shape[3],
                stride: *stride,
                padding: *padding,
            },
            Layer::Dense { weight, .. } => {
                LayerSpec::Dense { d_in: weight.shape[0], d_out: weight.shape[1] }
            }
            Layer::MaxOverTime => LayerSpec::MaxOverTime,
            Layer::LeakyRelu { alpha } => LayerSpec::LeakyRelu { alpha: *alpha },
            Layer::Tanh => LayerSpec::Tanh,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Softmax => LayerSpec::Softmax,
            Layer::BatchNorm { gamma, eps, momentum, .. } => {
                LayerSpec::BatchNorm { c: gamma.len(), eps: *eps, momentum: *momentum }
            }
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }
}

pub fn layer_from_spec(spec: &LayerSpec) -> Layer {
    match *spec {
        LayerSpec::Embedding { vocab, dim } => {
            Layer::Embedding { table: Tensor::zeros(&[vocab, dim]) }
        }
        LayerSpec::Conv1d { k, c_in, c_out } => Layer::Conv1d {
            weight: Tensor::zeros(&[k, c_in, c_out]),
            bias: Tensor::zeros(&[c_out]),
        },
        LayerSpec::Conv2d { k, c_in, c_out, stride, padding } => Layer::Conv2d {
            weight: Tensor::zeros(&[k, k, c_in, c_out]),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
        },
        LayerSpec::ConvTranspose2d { c_in, k, c_out, stride, padding } => {
            Layer::ConvTranspose2d {
                weight: Tensor::zeros(&[c_in, k, k, c_out]),
                bias: Tensor::zeros(&[c_out]),
                stride,
                padding,
            }
        }
        LayerSpec::Dense { d_in, d_out } => Layer::Dense {
            weight: Tensor::zeros(&[d_in, d_out]),
            bias: Tensor::zeros(&[d_out]),
        },
        LayerSpec::MaxOverTime => Layer::MaxOverTime,
        LayerSpec::LeakyRelu { alpha } => Layer::LeakyRelu { alpha },
        LayerSpec::Tanh => Layer::Tanh,
        LayerSpec::Sigmoid => Layer::Sigmoid,
        LayerSpec::Softmax => Layer::Softmax,
        LayerSpec::BatchNorm { c, eps, momentum } => Layer::BatchNorm {
            gamma: Tensor::zeros(&[c]),
            beta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::zeros(&[c]),
            eps,
            momentum,
        },
        LayerSpec::Dropout { rate } => Layer::Dropout { rate },
    }
}

pub fn model_spec(model: &Model) -> Vec<LayerSpec> {
    model.layers.iter().map(|l| l.spec()).collect()
}

pub fn model_from_spec(specs: &[LayerSpec]) -> Model {
    Model::new(specs.iter().map(layer_from_spec).collect())
}

/// Append all persistent tensors of the model to the blob.
pub fn append_state(model: &Model, blob: &mut Vec<f64>) {
    for layer in &model.layers {
        for t in layer.state() {
            blob.extend_from_slice(&t.data);
        }
    }
}

/// Fill the model's tensors from the blob, advancing the cursor.
pub fn read_state(model: &mut Model, blob: &[f64], cursor: &mut usize) -> Result<(), NnError> {
    for layer in &mut model.layers {
        for t in layer.state_mut() {
            let end = *cursor + t.data.len();
            if end > blob.len() {
                return Err(NnError::Checkpoint(format!(
                    "blob exhausted at offset {cursor}, need {end}"
                )));
            }
            t.data.copy_from_slice(&blob[*cursor..end]);
            *cursor = end;
        }
    }
    Ok(())
}

/// Serialize header + blob: one JSON line, then little-endian f64s.
pub fn write_checkpoint<H: Serialize>(header: &H, blob: &[f64]) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("header serializes");
    out.push(b'\n');
    out.reserve(blob.len() * 8);
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`write_checkpoint`].
pub fn read_checkpoint<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>), NnError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NnError::Checkpoint("missing header line".into()))?;
    let header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    let body = &bytes[newline + 1..];
    if body.len() % 8 != 0 {
        return Err(NnError::Checkpoint(format!("blob length {} not a multiple of 8", body.len())));
    }
    let blob = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, blob))
}
