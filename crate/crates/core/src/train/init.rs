use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{LayerSpec, Param, Sequential, Weights};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// `(fan_in, fan_out)` of a parametrized layer.
fn fans(layer: &LayerSpec) -> Option<(usize, usize)> {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
        LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, .. } => {
            Some((in_channels * kernel_h * kernel_w, out_channels * kernel_h * kernel_w))
        }
        _ => None,
    }
}

/// Xavier-uniform weights in `+-sqrt(6 / (fan_in + fan_out))` and zero biases.
/// Values are drawn in `f64` and converted, so every scalar type sees the same
/// draws for a seed.
pub fn init_weights<T: Real>(model: &Sequential, seed: u64) -> Weights<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = model
        .layers()
        .iter()
        .map(|layer| {
            let (wshape, blen) = layer.param_shapes()?;
            let (fan_in, fan_out) = fans(layer)?;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let n = wshape.iter().product();
            let data = (0..n).map(|_| T::from_f64_lossy(dist.sample(&mut rng))).collect();
            Some(Param {
                weight: Tensor::new(wshape, data).expect("inferred shape"),
                bias: Tensor::zeros(vec![blen]),
            })
        })
        .collect();
    Weights::new(model, params).expect("shapes from the model")
}
