use crate::error::{Error, Result};
use crate::nn::layer::{infer_shapes, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a layer within a [`Sequential`] model.
pub type LayerId = usize;

/// Architecture of a sequential classifier with its inferred shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequential {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    classes: usize,
    shapes: Vec<Vec<usize>>,
}

impl Sequential {
    pub fn new(layers: Vec<LayerSpec>, input_shape: Vec<usize>, classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("model layers"));
        }
        let shapes = infer_shapes(&layers, &input_shape)?;
        let last = shapes.last().expect("non-empty");
        if last != &[classes] {
            return Err(Error::ShapeMismatch {
                layer: layers.len() - 1,
                reason: format!("final output {last:?} does not match {classes} classes"),
            });
        }
        Ok(Self { layers, input_shape, classes, shapes })
    }

    /// Fully connected ReLU network, e.g. `mlp(&[784, 128, 10])`.
    pub fn mlp(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidParameter("an MLP needs at least input and output widths".into()));
        }
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(LayerSpec::dense(pair[0], pair[1]));
            if i + 2 < widths.len() {
                layers.push(LayerSpec::Relu);
            }
        }
        Self::new(layers, vec![widths[0]], *widths.last().unwrap())
    }

    /// conv(3x3) - relu - maxpool(2) - flatten - dense - relu - dense.
    pub fn small_cnn(input: [usize; 3], channels: usize, hidden: usize, classes: usize) -> Result<Self> {
        let [c, h, w] = input;
        let flat = channels * ((h - 2) / 2) * ((w - 2) / 2);
        Self::new(
            vec![
                LayerSpec::conv2d(c, channels, 3, 1, 0),
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::dense(flat, hidden),
                LayerSpec::Relu,
                LayerSpec::dense(hidden, classes),
            ],
            input.to_vec(),
            classes,
        )
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_shape(&self, layer: LayerId) -> Option<&[usize]> {
        self.shapes.get(layer).map(Vec::as_slice)
    }

    /// Neurons in a layer: one per scalar element of its output.
    pub fn neuron_count(&self, layer: LayerId) -> Option<usize> {
        self.output_shape(layer).map(|s| s.iter().product())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub(crate) fn input_shape_of(&self, layer: LayerId) -> &[usize] {
        if layer == 0 {
            &self.input_shape
        } else {
            &self.shapes[layer - 1]
        }
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }

    /// The layer feeding the classifier head (the last dense layer). Flatten
    /// layers are skipped since they only relabel their input's neurons.
    pub fn last_encoder_layer(&self) -> LayerId {
        let head = self.layers.iter().rposition(|l| matches!(l, LayerSpec::Dense { .. })).unwrap_or(self.layers.len() - 1);
        if head == 0 {
            return 0;
        }
        let mut id = head - 1;
        while id > 0 && matches!(self.layers[id], LayerSpec::Flatten) {
            id -= 1;
        }
        id
    }

    /// Hidden layers worth tapping: every elementwise nonlinearity and pooling
    /// output before the classifier head, in depth order.
    pub fn encoder_taps(&self) -> Vec<LayerId> {
        let last = self.last_encoder_layer();
        (0..=last)
            .filter(|&i| self.layers[i].is_elementwise() || matches!(self.layers[i], LayerSpec::MaxPool2d { .. }))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// Weight and bias of a parametrized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Parameters of a model, indexed by layer (`None` for parameter-free layers).
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    params: Vec<Option<Param<T>>>,
}

impl<T: Scalar> Weights<T> {
    pub fn new(model: &Sequential, params: Vec<Option<Param<T>>>) -> Result<Self> {
        let weights = Self { params };
        weights.validate(model)?;
        Ok(weights)
    }

    pub fn zeros(model: &Sequential) -> Self {
        let params = model
            .layers()
            .iter()
            .map(|l| {
                l.param_shapes().map(|(w, b)| Param { weight: Tensor::zeros(w), bias: Tensor::zeros(vec![b]) })
            })
            .collect();
        Self { params }
    }

    pub fn validate(&self, model: &Sequential) -> Result<()> {
        if self.params.len() != model.layers().len() {
            return Err(Error::InvalidShape(format!(
                "{} parameter slots for {} layers",
                self.params.len(),
                model.layers().len()
            )));
        }
        for (i, (layer, param)) in model.layers().iter().zip(&self.params).enumerate() {
            match (layer.param_shapes(), param) {
                (None, None) => {}
                (Some((w, b)), Some(p)) if p.weight.shape() == w.as_slice() && p.bias.shape() == [b] => {}
                (expected, found) => {
                    return Err(Error::ShapeMismatch {
                        layer: i,
                        reason: format!(
                            "expected parameters {expected:?}, found {:?}",
                            found.as_ref().map(|p| (p.weight.shape().to_vec(), p.bias.len()))
                        ),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn param(&self, layer: LayerId) -> Option<&Param<T>> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    pub fn param_mut(&mut self, layer: LayerId) -> Option<&mut Param<T>> {
        self.params.get_mut(layer).and_then(Option::as_mut)
    }

    pub fn slots(&self) -> &[Option<Param<T>>] {
        &self.params
    }

    /// All trainable tensors in layer order: weight then bias.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.params.iter().flatten().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.params.iter_mut().flatten().flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn cast<U: Scalar>(&self) -> Option<Weights<U>> {
        let params = self
            .params
            .iter()
            .map(|slot| match slot {
                None => Some(None),
                Some(p) => Some(Some(Param { weight: p.weight.cast()?, bias: p.bias.cast()? })),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Weights { params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_layout() {
        let m = Sequential::mlp(&[784, 128, 10]).unwrap();
        assert_eq!(m.layers().len(), 3);
        assert_eq!(m.last_encoder_layer(), 1);
        assert_eq!(m.neuron_count(1), Some(128));
        assert_eq!(m.encoder_taps(), vec![1]);
    }

    #[test]
    fn cnn_layout() {
        let m = Sequential::small_cnn([1, 28, 28], 4, 32, 10).unwrap();
        assert_eq!(m.output_shape(2), Some(&[4, 13, 13][..]));
        assert_eq!(m.last_encoder_layer(), 5);
        assert_eq!(m.encoder_taps(), vec![1, 2, 5]);
    }

    #[test]
    fn class_count_must_match_head() {
        assert!(Sequential::new(vec![LayerSpec::dense(4, 3)], vec![4], 2).is_err());
    }

    #[test]
    fn weights_validate_shapes() {
        let m = Sequential::mlp(&[2, 3]).unwrap();
        let w = Weights::<f32>::zeros(&m);
        assert!(w.validate(&m).is_ok());
        let bad = Weights::new(
            &m,
            vec![Some(Param { weight: Tensor::<f32>::zeros(vec![2, 3]), bias: Tensor::zeros(vec![3]) })],
        );
        assert!(matches!(bad, Err(Error::ShapeMismatch { layer: 0, .. })));
    }
}
