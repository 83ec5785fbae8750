use rayon::prelude::*;

use super::{pad_before, Conv2d, Dense, Layer, Model, Padding, Pool2d};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;

/// Neuron values and final output for one evaluated input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    /// One value per neuron, ordered by layer, then channel / output element.
    pub neurons: Vec<f32>,
    /// Output of the final layer.
    pub output: Vec<f32>,
    /// Argmax of `output`, ties to the lowest class id.
    pub label: usize,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Runs every input through the model, recording neuron values.
    ///
    /// Inputs hold raw pixel intensities in `[0, 255]`; they are scaled into
    /// `[0, 1]` before the first layer. Traces come back in input order.
    pub fn forward_with_trace(&self, batch: &[Tensor]) -> Result<Vec<ActivationTrace>> {
        for (index, t) in batch.iter().enumerate() {
            if t.shape() != self.input_shape {
                return Err(Error::InputShape {
                    index,
                    expected: self.input_shape.to_vec(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        Ok(batch
            .par_iter()
            .map(|t| self.trace_one(t.data().iter().map(|&p| p / 255.0).collect()))
            .collect())
    }

    /// [`Model::forward_with_trace`] over 8-bit images.
    pub fn trace_images(&self, images: &[Image]) -> Result<Vec<ActivationTrace>> {
        for (index, img) in images.iter().enumerate() {
            if img.shape() != self.input_shape {
                return Err(Error::InputShape {
                    index,
                    expected: self.input_shape.to_vec(),
                    actual: img.shape().to_vec(),
                });
            }
        }
        Ok(images
            .par_iter()
            .map(|img| self.trace_one(img.data().iter().map(|&p| f32::from(p) / 255.0).collect()))
            .collect())
    }

    /// Predicted class per image.
    pub fn predict_images(&self, images: &[Image]) -> Result<Vec<usize>> {
        Ok(self.trace_images(images)?.into_iter().map(|t| t.label).collect())
    }

    /// The slice of `trace` holding the neurons of the dense/conv2d layer at `layer`.
    ///
    /// # Panics
    ///
    /// If `layer` is not a neuron-bearing layer of this model.
    pub fn neuron_values<'t>(&self, trace: &'t ActivationTrace, layer: usize) -> &'t [f32] {
        let nl = self
            .neuron_layer(layer)
            .unwrap_or_else(|| panic!("layer {layer} carries no neurons"));
        &trace.neurons[nl.range()]
    }

    fn trace_one(&self, input: Vec<f32>) -> ActivationTrace {
        let mut neurons = vec![0.0; self.neuron_count];
        let mut act = input;
        let mut shape: &[usize] = &self.input_shape;
        let mut taps = self.neuron_layers.iter().peekable();

        for (i, layer) in self.layers.iter().enumerate() {
            act = match layer {
                Layer::Dense(d) => dense(d, &act),
                Layer::Conv2d(c) => conv2d(c, &act, shape, &self.shapes[i]),
                Layer::MaxPool2d(p) => pool2d(p, &act, shape, &self.shapes[i], PoolOp::Max),
                Layer::AvgPool2d(p) => pool2d(p, &act, shape, &self.shapes[i], PoolOp::Avg),
                Layer::Relu => {
                    for v in &mut act {
                        *v = v.max(0.0);
                    }
                    act
                }
                Layer::Flatten => act,
                Layer::Softmax => softmax(act),
            };
            shape = &self.shapes[i];

            if let Some(nl) = taps.next_if(|nl| nl.tap == i) {
                let dst = &mut neurons[nl.range()];
                if shape.len() == 3 {
                    channel_means(&act, shape[2], dst);
                } else {
                    dst.copy_from_slice(&act);
                }
            }
        }

        let label = argmax(&act);
        ActivationTrace {
            neurons,
            output: act,
            label,
        }
    }
}

fn channel_means(act: &[f32], channels: usize, dst: &mut [f32]) {
    let mut sums = vec![0f64; channels];
    for px in act.chunks_exact(channels) {
        for (s, &v) in sums.iter_mut().zip(px) {
            *s += f64::from(v);
        }
    }
    let n = (act.len() / channels) as f64;
    for (d, s) in dst.iter_mut().zip(sums) {
        *d = (s / n) as f32;
    }
}

fn dense(d: &Dense, input: &[f32]) -> Vec<f32> {
    let mut out = d.bias.clone();
    for (x, row) in input.iter().zip(d.weights.chunks_exact(d.outputs)) {
        if *x == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    out
}

fn conv2d(c: &Conv2d, input: &[f32], in_shape: &[usize], out_shape: &[usize]) -> Vec<f32> {
    let (ih, iw, cin) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow, cout) = (out_shape[0], out_shape[1], out_shape[2]);
    let (pt, pl) = match c.padding {
        Padding::Valid => (0, 0),
        Padding::Same => (
            pad_before(ih, oh, c.kernel_h, c.stride),
            pad_before(iw, ow, c.kernel_w, c.stride),
        ),
    };

    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * cout..][..cout];
            acc.copy_from_slice(&c.bias);
            for ky in 0..c.kernel_h {
                let Some(iy) = (oy * c.stride + ky).checked_sub(pt).filter(|&y| y < ih) else {
                    continue;
                };
                for kx in 0..c.kernel_w {
                    let Some(ix) = (ox * c.stride + kx).checked_sub(pl).filter(|&x| x < iw) else {
                        continue;
                    };
                    let px = &input[(iy * iw + ix) * cin..][..cin];
                    let taps = &c.weights[(ky * c.kernel_w + kx) * cin * cout..][..cin * cout];
                    for (x, row) in px.iter().zip(taps.chunks_exact(cout)) {
                        for (a, w) in acc.iter_mut().zip(row) {
                            *a += x * w;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy)]
enum PoolOp {
    Max,
    Avg,
}

fn pool2d(p: &Pool2d, input: &[f32], in_shape: &[usize], out_shape: &[usize], op: PoolOp) -> Vec<f32> {
    let (ih, iw, ch) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let (pt, pl) = match p.padding {
        Padding::Valid => (0, 0),
        Padding::Same => (
            pad_before(ih, oh, p.window, p.stride),
            pad_before(iw, ow, p.window, p.stride),
        ),
    };

    let mut out = Vec::with_capacity(oh * ow * ch);
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..ch {
                let mut max = f32::NEG_INFINITY;
                let mut sum = 0.0;
                let mut n = 0usize;
                for ky in 0..p.window {
                    let Some(iy) = (oy * p.stride + ky).checked_sub(pt).filter(|&y| y < ih) else {
                        continue;
                    };
                    for kx in 0..p.window {
                        let Some(ix) = (ox * p.stride + kx).checked_sub(pl).filter(|&x| x < iw) else {
                            continue;
                        };
                        let v = input[(iy * iw + ix) * ch + c];
                        max = max.max(v);
                        sum += v;
                        n += 1;
                    }
                }
                out.push(match op {
                    PoolOp::Max => max,
                    PoolOp::Avg => sum / n as f32,
                });
            }
        }
    }
    out
}

fn softmax(mut v: Vec<f32>) -> Vec<f32> {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in &mut v {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in &mut v {
        *x /= sum;
    }
    v
}
