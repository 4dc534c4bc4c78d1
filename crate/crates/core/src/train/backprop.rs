use crate::error::{Error, Result};
use crate::nn::forward::{apply_layer, window_of};
use crate::nn::{argmax, probabilities, LayerSpec, Param, Sequential, Weights};
use crate::nn::ops;
use crate::parallel;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Summed (not averaged) loss, correct-prediction count and gradients of one
/// slice of a batch.
pub(crate) struct Partial<T> {
    pub loss: T,
    pub correct: usize,
    pub grads: Weights<T>,
}

fn check<T: Real>(model: &Sequential, weights: &Weights<T>, batch: &Tensor<T>, labels: &[usize]) -> Result<()> {
    weights.validate(model)?;
    if batch.rank() != model.input_shape().len() + 1 || &batch.shape()[1..] != model.input_shape() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            reason: format!("batch shape {:?} does not match input shape {:?}", batch.shape(), model.input_shape()),
        });
    }
    if batch.batch() == 0 {
        return Err(Error::Empty("training batch"));
    }
    if labels.len() != batch.batch() {
        return Err(Error::InvalidShape(format!("{} labels for a batch of {}", labels.len(), batch.batch())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.classes()) {
        return Err(Error::InvalidParameter(format!("label {bad} outside {} classes", model.classes())));
    }
    if !batch.all_finite() {
        return Err(Error::NonFinite("training batch".into()));
    }
    Ok(())
}

/// `-ln p`, capped at `p = MIN_POSITIVE`; NaN propagates so divergence shows.
fn cross_entropy<T: Real>(p: T) -> T {
    if p.is_nan() {
        return p;
    }
    -p.max(T::min_positive_value()).ln()
}

fn grad_param<T: Real>(like: &Param<T>, gw: Vec<T>, gb: Vec<T>) -> Param<T> {
    Param {
        weight: Tensor::new(like.weight.shape().to_vec(), gw).expect("weight-shaped gradient"),
        bias: Tensor::new(like.bias.shape().to_vec(), gb).expect("bias-shaped gradient"),
    }
}

pub(crate) fn partial<T: Real>(model: &Sequential, weights: &Weights<T>, x: &[T], labels: &[usize]) -> Partial<T> {
    let layers = model.layers();
    let classes = model.classes();
    let mut inputs = Vec::with_capacity(layers.len());
    let mut argmaxes = Vec::with_capacity(layers.len());
    let mut current = x.to_vec();
    for id in 0..layers.len() {
        let (y, arg) = apply_layer(model, weights, id, &current);
        inputs.push(std::mem::replace(&mut current, y));
        argmaxes.push(arg);
    }

    // A trailing softmax layer is folded into the loss: d(loss)/d(logits) = p - y.
    let head = model.ends_with_softmax();
    let probs = if head { current } else { ops::softmax_rows(&current, classes) };
    let mut loss = T::zero();
    let mut correct = 0;
    let mut g = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = &probs[i * classes..(i + 1) * classes];
        loss = loss + cross_entropy(row[y]);
        correct += usize::from(argmax(row) == y);
        g[i * classes + y] = g[i * classes + y] - T::one();
    }

    let stop = if head { layers.len() - 1 } else { layers.len() };
    let mut grads: Vec<Option<Param<T>>> = vec![None; layers.len()];
    for id in (0..stop).rev() {
        let input = &inputs[id];
        let spec = &layers[id];
        g = match *spec {
            LayerSpec::Dense { inputs: n_in, outputs: n_out } => {
                let p = weights.param(id).expect("validated weights");
                let (gx, gw, gb) = ops::dense_backward(input, &g, p.weight.data(), n_in, n_out);
                grads[id] = Some(grad_param(p, gw, gb));
                gx
            }
            LayerSpec::Conv2d { out_channels, .. } => {
                let p = weights.param(id).expect("validated weights");
                let geom = window_of(spec, model.input_shape_of(id), &model.shapes()[id]);
                let (gx, gw, gb) = ops::conv2d_backward(input, &g, p.weight.data(), out_channels, &geom);
                grads[id] = Some(grad_param(p, gw, gb));
                gx
            }
            LayerSpec::MaxPool2d { .. } => {
                ops::maxpool_backward(&g, argmaxes[id].as_deref().expect("pooling argmax"), input.len())
            }
            LayerSpec::Relu => g.iter().zip(input).map(|(&d, &v)| if v > T::zero() { d } else { T::zero() }).collect(),
            LayerSpec::Tanh => g
                .iter()
                .zip(input)
                .map(|(&d, &v)| {
                    let t = v.tanh();
                    d * (T::one() - t * t)
                })
                .collect(),
            LayerSpec::Sigmoid => g
                .iter()
                .zip(input)
                .map(|(&d, &v)| {
                    let s = ops::sigmoid(v);
                    d * s * (T::one() - s)
                })
                .collect(),
            LayerSpec::Flatten => g,
            LayerSpec::Softmax => {
                let width = model.shapes()[id][0];
                let y = ops::softmax_rows(input, width);
                let mut out = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks_exact(width).zip(y.chunks_exact(width)) {
                    let inner = ops::dot(gr, yr);
                    out.extend(gr.iter().zip(yr).map(|(&d, &s)| s * (d - inner)));
                }
                out
            }
        };
    }
    Partial { loss, correct, grads: Weights::new(model, grads).expect("gradients mirror the weights") }
}

fn combine<T: Real>(mut a: Partial<T>, b: Partial<T>) -> Partial<T> {
    a.loss = a.loss + b.loss;
    a.correct += b.correct;
    for (x, y) in a.grads.tensors_mut().zip(b.grads.tensors()) {
        for (u, &v) in x.data_mut().iter_mut().zip(y.data()) {
            *u = *u + v;
        }
    }
    a
}

/// Summed loss/gradients over a batch, split into fixed chunks and combined by
/// a pairwise tree so the result does not depend on the worker count.
pub(crate) fn batch_partial<T: Real>(
    model: &Sequential,
    weights: &Weights<T>,
    batch: &Tensor<T>,
    labels: &[usize],
) -> Result<Partial<T>> {
    check(model, weights, batch, labels)?;
    let row = model.input_len();
    let data = batch.data();
    Ok(parallel::chunked_tree_reduce(
        labels.len(),
        |r| partial(model, weights, &data[r.start * row..r.end * row], &labels[r]),
        combine,
    )
    .expect("non-empty batch"))
}

/// Softmax cross-entropy averaged over the batch, and its gradient with
/// respect to every trainable tensor (same layout as `weights`).
pub fn loss_and_grads<T: Real>(
    model: &Sequential,
    weights: &Weights<T>,
    batch: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Weights<T>)> {
    let Partial { loss, mut grads, .. } = batch_partial(model, weights, batch, labels)?;
    let scale = T::one() / T::from_count(labels.len());
    for t in grads.tensors_mut() {
        for v in t.data_mut() {
            *v = *v * scale;
        }
    }
    Ok((loss * scale, grads))
}

/// Mean softmax cross-entropy only.
pub fn loss<T: Real>(model: &Sequential, weights: &Weights<T>, batch: &Tensor<T>, labels: &[usize]) -> Result<T> {
    check(model, weights, batch, labels)?;
    let probs = probabilities(model, weights, batch)?;
    let c = model.classes();
    let total = labels.iter().enumerate().fold(T::zero(), |acc, (i, &y)| acc + cross_entropy(probs.data()[i * c + y]));
    Ok(total / T::from_count(labels.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::init_weights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(model: &Sequential, n: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = vec![n];
        shape.extend_from_slice(model.input_shape());
        let data = (0..n * model.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| rng.gen_range(0..model.classes())).collect();
        (Tensor::new(shape, data).unwrap(), labels)
    }

    fn perturbed(w: &Weights<f64>, slot: usize, idx: usize, delta: f64) -> Weights<f64> {
        let mut out = w.clone();
        let t = out.tensors_mut().nth(slot).unwrap();
        t.data_mut()[idx] += delta;
        out
    }

    /// Worst relative error of analytic against central-difference gradients.
    fn worst_relative_error(model: &Sequential, seed: u64) -> f64 {
        let mut w = init_weights::<f64>(model, seed);
        // non-zero biases so every code path carries signal
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
        for p in (0..model.layers().len()).filter_map(|i| w.param_mut(i).map(|_| i)).collect::<Vec<_>>() {
            for b in w.param_mut(p).unwrap().bias.data_mut() {
                *b = rng.gen_range(-0.1..0.1);
            }
        }
        let (x, y) = random_batch(model, 8, seed);
        let (_, grads) = loss_and_grads(model, &w, &x, &y).unwrap();
        let eps = 1e-3;
        let mut worst = 0.0f64;
        for (slot, g) in grads.tensors().enumerate() {
            for (i, &analytic) in g.data().iter().enumerate() {
                let up = loss(model, &perturbed(&w, slot, i, eps), &x, &y).unwrap();
                let down = loss(model, &perturbed(&w, slot, i, -eps), &x, &y).unwrap();
                let numeric = (up - down) / (2.0 * eps);
                let denom = analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let m = Sequential::mlp(&[3, 5]).unwrap();
        let w = Weights::<f64>::zeros(&m);
        let (x, y) = random_batch(&m, 4, 1);
        let (l, _) = loss_and_grads(&m, &w, &x, &y).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn saturated_correct_prediction_has_no_signal() {
        let m = Sequential::new(vec![LayerSpec::dense(2, 3)], vec![2], 3).unwrap();
        let mut w = Weights::<f64>::zeros(&m);
        w.param_mut(0).unwrap().bias.data_mut().copy_from_slice(&[40.0, 0.0, 0.0]);
        let x = Tensor::new(vec![2, 2], vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let (_, g) = loss_and_grads(&m, &w, &x, &[0, 0]).unwrap();
        let norm: f64 = g.tensors().flat_map(|t| t.data().iter().map(|v| v * v)).sum::<f64>().sqrt();
        assert!(norm < 1e-4, "{norm}");
    }

    #[test]
    fn gradient_check_two_layer_mlp() {
        let m = Sequential::mlp(&[6, 5, 4]).unwrap();
        assert!(worst_relative_error(&m, 3) < 1e-3);
    }

    #[test]
    fn gradient_check_every_layer_kind() {
        let models = [
            Sequential::new(vec![LayerSpec::dense(5, 3)], vec![5], 3).unwrap(),
            Sequential::new(
                vec![LayerSpec::conv2d(2, 2, 3, 1, 1), LayerSpec::Flatten, LayerSpec::dense(32, 3)],
                vec![2, 4, 4],
                3,
            )
            .unwrap(),
            Sequential::new(
                vec![LayerSpec::MaxPool2d { window: 2, stride: 2 }, LayerSpec::Flatten, LayerSpec::dense(8, 3)],
                vec![2, 4, 4],
                3,
            )
            .unwrap(),
            Sequential::new(
                vec![LayerSpec::dense(4, 4), LayerSpec::Tanh, LayerSpec::dense(4, 4), LayerSpec::Sigmoid, LayerSpec::dense(4, 3)],
                vec![4],
                3,
            )
            .unwrap(),
            Sequential::new(vec![LayerSpec::dense(4, 3), LayerSpec::Softmax], vec![4], 3).unwrap(),
            Sequential::new(
                vec![LayerSpec::dense(4, 5), LayerSpec::Softmax, LayerSpec::dense(5, 3)],
                vec![4],
                3,
            )
            .unwrap(),
            Sequential::small_cnn([1, 6, 6], 2, 4, 3).unwrap(),
        ];
        for (i, m) in models.iter().enumerate() {
            let e = worst_relative_error(m, 11 + i as u64);
            assert!(e < 1e-3, "model {i}: {e}");
        }
    }

    #[test]
    fn gradients_independent_of_workers() {
        let m = Sequential::small_cnn([1, 6, 6], 2, 4, 3).unwrap();
        let w = init_weights::<f64>(&m, 0);
        let (x, y) = random_batch(&m, 150, 2);
        let a = parallel::with_workers(Some(1), || loss_and_grads(&m, &w, &x, &y).unwrap());
        let b = parallel::with_workers(Some(4), || loss_and_grads(&m, &w, &x, &y).unwrap());
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let m = Sequential::mlp(&[3, 2]).unwrap();
        let w = Weights::<f64>::zeros(&m);
        let x = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(loss_and_grads(&m, &w, &x, &[2]).is_err());
        assert!(loss_and_grads(&m, &w, &x, &[0, 1]).is_err());
        let wrong = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
        assert!(matches!(loss_and_grads(&m, &w, &wrong, &[0]), Err(Error::ShapeMismatch { .. })));
    }
}
