//! The model under test: an ordered list of layers over an `[H, W, C]` input.
//!
//! A *neuron* is one output element of a dense layer or one output channel of
//! a conv2d layer. Its value is read after the activation that immediately
//! follows the layer (if that activation is a ReLU); conv2d channels are
//! reduced to their spatial mean. Pooling, flatten, relu and softmax layers
//! carry no neurons of their own.

mod binary16;
mod forward;
mod format;
mod quantize;

pub use binary16::{f16_bits_to_f32, f32_to_f16_bits, truncate_to_f16};
pub use forward::{argmax, ActivationTrace};
pub use format::{load_model, MODEL_MANIFEST, WEIGHTS_BLOB};
pub use quantize::quantize_model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    #[default]
    Valid,
}

/// Fully connected layer. Any input shape is consumed in flattened order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[inputs][outputs]`, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[kh][kw][in][out]`, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub window: usize,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2d(Pool2d),
    AvgPool2d(Pool2d),
    Relu,
    Flatten,
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::AvgPool2d(_) => "avgpool2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Softmax => "softmax",
        }
    }

    /// Number of neurons this layer contributes.
    pub fn neuron_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs,
            Layer::Conv2d(c) => c.out_channels,
            _ => 0,
        }
    }

    /// Trainable scalars in blob order: weights, then bias.
    pub(crate) fn params(&self) -> Option<(&[f32], &[f32])> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut [f32], &mut [f32])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            _ => None,
        }
    }
}

/// Where one layer's neurons live inside an [`ActivationTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronLayer {
    /// Index of the dense/conv2d layer owning the neurons.
    pub layer: usize,
    /// Index of the layer whose output is sampled (the layer itself or its ReLU).
    pub tap: usize,
    /// First neuron id of this layer.
    pub offset: usize,
    pub len: usize,
}

impl NeuronLayer {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    /// Output shape of each layer.
    shapes: Vec<Vec<usize>>,
    neuron_layers: Vec<NeuronLayer>,
    neuron_count: usize,
}

fn pooled_extent(input: usize, window: usize, stride: usize, padding: Padding) -> Option<usize> {
    match padding {
        Padding::Valid => (input >= window).then(|| (input - window) / stride + 1),
        Padding::Same => Some(input.div_ceil(stride)),
    }
}

/// Leading padding for a "same" window, TensorFlow convention.
pub(crate) fn pad_before(input: usize, output: usize, window: usize, stride: usize) -> usize {
    ((output - 1) * stride + window).saturating_sub(input) / 2
}

fn shape_err(layer: usize, detail: impl Into<String>) -> Error {
    Error::LayerShape {
        layer,
        detail: detail.into(),
    }
}

impl Model {
    /// Validates layer parameters and shapes and computes the neuron layout.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::Manifest(format!(
                "input shape {input_shape:?} has a zero dimension"
            )));
        }
        if layers.is_empty() {
            return Err(Error::Manifest("model has no layers".into()));
        }

        let mut shapes = Vec::with_capacity(layers.len());
        let mut current: Vec<usize> = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            let next = match layer {
                Layer::Dense(d) => {
                    let flat: usize = current.iter().product();
                    if d.inputs != flat {
                        return Err(shape_err(
                            i,
                            format!("dense expects {} inputs, previous layer yields {flat} ({current:?})", d.inputs),
                        ));
                    }
                    if d.outputs == 0 {
                        return Err(shape_err(i, "dense layer with zero outputs"));
                    }
                    if d.weights.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                        return Err(shape_err(i, "dense parameter lengths disagree with [in, out]"));
                    }
                    vec![d.outputs]
                }
                Layer::Conv2d(c) => {
                    let &[h, w, ch] = current.as_slice() else {
                        return Err(shape_err(i, format!("conv2d needs [H, W, C] input, got {current:?}")));
                    };
                    if c.in_channels != ch {
                        return Err(shape_err(
                            i,
                            format!("conv2d kernel declares {} input channels, input has {ch}", c.in_channels),
                        ));
                    }
                    if c.kernel_h == 0 || c.kernel_w == 0 || c.out_channels == 0 || c.stride == 0 {
                        return Err(shape_err(i, "conv2d with zero kernel extent, channels or stride"));
                    }
                    if c.weights.len() != c.kernel_h * c.kernel_w * c.in_channels * c.out_channels
                        || c.bias.len() != c.out_channels
                    {
                        return Err(shape_err(i, "conv2d parameter lengths disagree with kernel shape"));
                    }
                    let oh = pooled_extent(h, c.kernel_h, c.stride, c.padding);
                    let ow = pooled_extent(w, c.kernel_w, c.stride, c.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => vec![oh, ow, c.out_channels],
                        _ => return Err(shape_err(i, format!("conv2d kernel larger than input {current:?}"))),
                    }
                }
                Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                    let &[h, w, ch] = current.as_slice() else {
                        return Err(shape_err(i, format!("pooling needs [H, W, C] input, got {current:?}")));
                    };
                    if p.window == 0 || p.stride == 0 {
                        return Err(shape_err(i, "pooling with zero window or stride"));
                    }
                    match (
                        pooled_extent(h, p.window, p.stride, p.padding),
                        pooled_extent(w, p.window, p.stride, p.padding),
                    ) {
                        (Some(oh), Some(ow)) => vec![oh, ow, ch],
                        _ => return Err(shape_err(i, format!("pool window larger than input {current:?}"))),
                    }
                }
                Layer::Relu => current.clone(),
                Layer::Flatten => vec![current.iter().product()],
                Layer::Softmax => {
                    if i + 1 != layers.len() {
                        return Err(shape_err(i, "softmax must be the final layer"));
                    }
                    current.clone()
                }
            };
            shapes.push(next.clone());
            current = next;
        }

        let mut neuron_layers = Vec::new();
        let mut offset = 0;
        for (i, layer) in layers.iter().enumerate() {
            let len = layer.neuron_count();
            if len == 0 {
                continue;
            }
            let tap = if matches!(layers.get(i + 1), Some(Layer::Relu)) {
                i + 1
            } else {
                i
            };
            neuron_layers.push(NeuronLayer {
                layer: i,
                tap,
                offset,
                len,
            });
            offset += len;
        }

        Ok(Self {
            input_shape,
            layers,
            shapes,
            neuron_layers,
            neuron_count: offset,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of layer `i`.
    pub fn output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map_or(0, |s| s.iter().product())
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn neuron_layers(&self) -> &[NeuronLayer] {
        &self.neuron_layers
    }

    /// Neuron layout for the dense/conv2d layer at `layer`, if it bears neurons.
    pub fn neuron_layer(&self, layer: usize) -> Option<&NeuronLayer> {
        self.neuron_layers.iter().find(|n| n.layer == layer)
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// All trainable scalars in layer order (weights, then bias, per layer).
    pub fn params(&self) -> impl Iterator<Item = f32> + '_ {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }
}
