use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mutation::CandidateSet;
use crate::nn::{forward, model_input, ActivationTrace, LayerId, Sequential, Weights};
use crate::scalar::{Real, Scalar};
use crate::tensor::Tensor;

/// Activations of one tapped layer for both members of every candidate pair,
/// stored as two row-major `[pairs, neurons]` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTraces<T> {
    layer: LayerId,
    width: usize,
    original: Vec<T>,
    mutated: Vec<T>,
}

impl<T: Scalar> PairTraces<T> {
    pub fn new(layer: LayerId, width: usize, original: Vec<T>, mutated: Vec<T>) -> Result<Self> {
        if width == 0 || original.is_empty() {
            return Err(Error::Empty("pair traces"));
        }
        if original.len() != mutated.len() || original.len() % width != 0 {
            return Err(Error::InvalidShape(format!(
                "trace matrices of {} and {} values do not split into rows of {width}",
                original.len(),
                mutated.len()
            )));
        }
        Ok(Self { layer, width, original, mutated })
    }

    /// One `(N(x), N(x'))` row pair per candidate.
    pub fn from_rows(layer: LayerId, rows: &[(Vec<T>, Vec<T>)]) -> Result<Self> {
        let width = rows.first().ok_or(Error::Empty("pair traces"))?.0.len();
        let mut original = Vec::with_capacity(rows.len() * width);
        let mut mutated = Vec::with_capacity(rows.len() * width);
        for (i, (a, b)) in rows.iter().enumerate() {
            if a.len() != width || b.len() != width {
                return Err(Error::InvalidShape(format!("pair {i} rows do not have {width} neurons")));
            }
            original.extend_from_slice(a);
            mutated.extend_from_slice(b);
        }
        Self::new(layer, width, original, mutated)
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    /// Neurons per pair.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.original.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    pub fn original(&self, pair: usize) -> &[T] {
        &self.original[pair * self.width..(pair + 1) * self.width]
    }

    pub fn mutated(&self, pair: usize) -> &[T] {
        &self.mutated[pair * self.width..(pair + 1) * self.width]
    }

    /// Rows at `indices`, renumbered from zero.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut original = Vec::with_capacity(indices.len() * self.width);
        let mut mutated = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            original.extend_from_slice(self.original(i));
            mutated.extend_from_slice(self.mutated(i));
        }
        Self::new(self.layer, self.width, original, mutated)
    }

    /// Scales every activation by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            layer: self.layer,
            width: self.width,
            original: self.original.iter().map(|&v| v * factor).collect(),
            mutated: self.mutated.iter().map(|&v| v * factor).collect(),
        }
    }
}

impl<T: Real> PairTraces<T> {
    /// Runs the network on both members of every pair and keeps `layer`.
    pub fn capture(model: &Sequential, weights: &Weights<T>, set: &CandidateSet, layer: LayerId) -> Result<Self> {
        let width = model.neuron_count(layer).ok_or(Error::MissingLayer(layer))?;
        let taps = BTreeSet::from([layer]);
        let run = |images: Tensor<f32>| -> Result<Vec<T>> {
            let batch = model_input::<T>(model, &images)?;
            let (_, trace) = forward(model, weights, &batch, &taps)?;
            Ok(trace.into_layer(layer).ok_or(Error::MissingLayer(layer))?.into_data())
        };
        let original = run(set.originals())?;
        let mutated = run(set.mutated())?;
        Self::new(layer, width, original, mutated)
    }

    /// Pairs up two traces of the same batch, row for row.
    pub fn from_traces(x: &ActivationTrace<T>, x_mutated: &ActivationTrace<T>, layer: LayerId) -> Result<Self> {
        let a = x.get(layer).ok_or(Error::MissingLayer(layer))?;
        let b = x_mutated.get(layer).ok_or(Error::MissingLayer(layer))?;
        if a.shape() != b.shape() {
            return Err(Error::InvalidShape(format!("trace shapes {:?} and {:?} differ", a.shape(), b.shape())));
        }
        Self::new(layer, a.row_len(), a.data().to_vec(), b.data().to_vec())
    }
}
