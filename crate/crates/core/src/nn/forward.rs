use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::model::{LayerId, Sequential, Weights};
use crate::nn::ops::{self, Window2d};
use crate::parallel::CHUNK;
use crate::scalar::Real;
use crate::tensor::Tensor;
use rayon::prelude::*;

/// Post-activation outputs captured at tapped layers, each `[batch, ..shape]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace<T> {
    layers: BTreeMap<LayerId, Tensor<T>>,
}

impl<T: Real> ActivationTrace<T> {
    pub fn get(&self, layer: LayerId) -> Option<&Tensor<T>> {
        self.layers.get(&layer)
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.keys().copied()
    }

    pub fn into_layer(mut self, layer: LayerId) -> Option<Tensor<T>> {
        self.layers.remove(&layer)
    }

    pub fn from_layers(layers: BTreeMap<LayerId, Tensor<T>>) -> Self {
        Self { layers }
    }

    fn concat(parts: Vec<Self>) -> Result<Self> {
        let mut merged: BTreeMap<LayerId, Vec<Tensor<T>>> = BTreeMap::new();
        for part in parts {
            for (id, t) in part.layers {
                merged.entry(id).or_default().push(t);
            }
        }
        let layers = merged
            .into_iter()
            .map(|(id, ts)| concat_batches(ts).map(|t| (id, t)))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }
}

fn concat_batches<T: Real>(parts: Vec<Tensor<T>>) -> Result<Tensor<T>> {
    let mut shape = parts.first().ok_or(Error::Empty("batch concat"))?.shape().to_vec();
    shape[0] = parts.iter().map(Tensor::batch).sum();
    let data = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(shape, data)
}

pub(crate) fn window_of(spec: &LayerSpec, input: &[usize], output: &[usize]) -> Window2d {
    let (kh, kw, stride, padding) = match *spec {
        LayerSpec::Conv2d { kernel_h, kernel_w, stride, padding, .. } => (kernel_h, kernel_w, stride, padding),
        LayerSpec::MaxPool2d { window, stride } => (window, window, stride, 0),
        _ => unreachable!("window geometry requested for {}", spec.kind()),
    };
    Window2d {
        channels: input[0],
        height: input[1],
        width: input[2],
        kernel_h: kh,
        kernel_w: kw,
        stride,
        padding,
        out_h: output[1],
        out_w: output[2],
    }
}

/// Applies one layer to a flat batch buffer. Max pooling also yields its
/// argmax table for the backward pass.
pub(crate) fn apply_layer<T: Real>(
    model: &Sequential,
    weights: &Weights<T>,
    layer: LayerId,
    x: &[T],
) -> (Vec<T>, Option<Vec<usize>>) {
    let spec = &model.layers()[layer];
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            let p = weights.param(layer).expect("validated weights");
            (ops::dense_forward(x, p.weight.data(), p.bias.data(), inputs, outputs), None)
        }
        LayerSpec::Conv2d { out_channels, .. } => {
            let p = weights.param(layer).expect("validated weights");
            let g = window_of(spec, model.input_shape_of(layer), &model.shapes()[layer]);
            (ops::conv2d_forward(x, p.weight.data(), p.bias.data(), out_channels, &g), None)
        }
        LayerSpec::MaxPool2d { .. } => {
            let g = window_of(spec, model.input_shape_of(layer), &model.shapes()[layer]);
            let (y, arg) = ops::maxpool_forward(x, &g);
            (y, Some(arg))
        }
        LayerSpec::Relu => (x.iter().map(|&v| ops::relu(v)).collect(), None),
        LayerSpec::Tanh => (x.iter().map(|v| v.tanh()).collect(), None),
        LayerSpec::Sigmoid => (x.iter().map(|&v| ops::sigmoid(v)).collect(), None),
        LayerSpec::Flatten => (x.to_vec(), None),
        LayerSpec::Softmax => {
            let width = model.shapes()[layer][0];
            (ops::softmax_rows(x, width), None)
        }
    }
}

fn check_batch<T: Real>(model: &Sequential, batch: &Tensor<T>) -> Result<()> {
    if batch.rank() != model.input_shape().len() + 1 || &batch.shape()[1..] != model.input_shape() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            reason: format!("batch shape {:?} does not match input shape {:?}", batch.shape(), model.input_shape()),
        });
    }
    if !batch.all_finite() {
        return Err(Error::NonFinite("forward input".into()));
    }
    Ok(())
}

fn with_batch(batch: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(batch);
    s.extend_from_slice(shape);
    s
}

fn forward_serial<T: Real>(
    model: &Sequential,
    weights: &Weights<T>,
    x: &[T],
    batch: usize,
    taps: &BTreeSet<LayerId>,
) -> Result<(Tensor<T>, ActivationTrace<T>)> {
    let mut current = x.to_vec();
    let mut layers = BTreeMap::new();
    for id in 0..model.layers().len() {
        current = apply_layer(model, weights, id, &current).0;
        if taps.contains(&id) {
            layers.insert(id, Tensor::new(with_batch(batch, &model.shapes()[id]), current.clone())?);
        }
    }
    let logits = Tensor::new(vec![batch, model.classes()], current)?;
    Ok((logits, ActivationTrace { layers }))
}

/// Evaluates the network on a `[batch, ..input]` tensor and captures the
/// post-activation output of every layer in `taps`.
///
/// Batch elements are processed independently in fixed-size chunks, so the
/// result does not depend on the number of worker threads.
pub fn forward<T: Real>(
    model: &Sequential,
    weights: &Weights<T>,
    batch: &Tensor<T>,
    taps: &BTreeSet<LayerId>,
) -> Result<(Tensor<T>, ActivationTrace<T>)> {
    weights.validate(model)?;
    check_batch(model, batch)?;
    if let Some(&bad) = taps.iter().find(|&&t| t >= model.layers().len()) {
        return Err(Error::MissingLayer(bad));
    }
    let n = batch.batch();
    let row = model.input_len();
    if n <= CHUNK {
        return forward_serial(model, weights, batch.data(), n, taps);
    }
    let parts = batch
        .data()
        .par_chunks(CHUNK * row)
        .map(|chunk| forward_serial(model, weights, chunk, chunk.len() / row, taps))
        .collect::<Result<Vec<_>>>()?;
    let (logits, traces): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok((concat_batches(logits)?, ActivationTrace::concat(traces)?))
}

/// Casts images to `T` and reshapes each item to the model's input shape when
/// the element counts agree (e.g. `[n, 1, 28, 28]` for a `[784]` input).
pub fn model_input<T: Real>(model: &Sequential, images: &Tensor<f32>) -> Result<Tensor<T>> {
    let cast = images.cast::<T>().ok_or_else(|| Error::NonFinite("input images".into()))?;
    if &cast.shape()[1..] == model.input_shape() {
        return Ok(cast);
    }
    if cast.row_len() != model.input_len() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            reason: format!("images {:?} do not fit input shape {:?}", images.shape(), model.input_shape()),
        });
    }
    let mut shape = vec![cast.batch()];
    shape.extend_from_slice(model.input_shape());
    cast.reshape(shape)
}

/// Network output without any taps.
pub fn logits<T: Real>(model: &Sequential, weights: &Weights<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    forward(model, weights, batch, &BTreeSet::new()).map(|(l, _)| l)
}

/// Class probabilities: the network output when it ends in a softmax layer,
/// otherwise the softmax of its logits.
pub fn probabilities<T: Real>(model: &Sequential, weights: &Weights<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let out = logits(model, weights, batch)?;
    if model.ends_with_softmax() {
        return Ok(out);
    }
    let shape = out.shape().to_vec();
    Tensor::new(shape, ops::softmax_rows(out.data(), model.classes()))
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Real>(model: &Sequential, weights: &Weights<T>, batch: &Tensor<T>) -> Result<Vec<usize>> {
    let out = logits(model, weights, batch)?;
    Ok(out.rows().map(argmax).collect())
}
