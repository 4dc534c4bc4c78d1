use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ActivationTrace, LayerId};
use crate::nss::traces::PairTraces;
use crate::parallel;
use crate::scalar::{Real, Scalar};

/// A neuron: one scalar element of a layer's flattened output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronAddress {
    pub layer: LayerId,
    pub index: usize,
}

/// Per-neuron (accumulated) sensitivity over one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityVector<T> {
    pub layer: LayerId,
    pub values: Vec<T>,
}

impl<T: Scalar> SensitivityVector<T> {
    pub fn zeros(layer: LayerId, width: usize) -> Self {
        Self { layer, values: vec![T::zero(); width] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + b;
        }
    }
}

fn abs_diff<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&u, &v)| (u - v).abs()).collect()
}

/// Sensitivity of every neuron of the traced layer for pair `pair`.
pub fn neuron_sensitivity<T: Scalar>(traces: &PairTraces<T>, pair: usize) -> SensitivityVector<T> {
    SensitivityVector { layer: traces.layer(), values: abs_diff(traces.original(pair), traces.mutated(pair)) }
}

/// Sensitivity between two single-input traces at `layer`.
pub fn trace_sensitivity<T: Real>(
    x: &ActivationTrace<T>,
    x_mutated: &ActivationTrace<T>,
    layer: LayerId,
) -> Result<SensitivityVector<T>> {
    let a = x.get(layer).ok_or(Error::MissingLayer(layer))?;
    let b = x_mutated.get(layer).ok_or(Error::MissingLayer(layer))?;
    if a.shape() != b.shape() {
        return Err(Error::InvalidShape(format!("trace shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    if a.batch() != 1 {
        return Err(Error::InvalidShape(format!("expected single-input traces, got batch {}", a.batch())));
    }
    Ok(SensitivityVector { layer, values: abs_diff(a.data(), b.data()) })
}

fn check_addresses(traces_layer: LayerId, width: usize, sensitive: &[NeuronAddress]) -> Result<Vec<usize>> {
    if sensitive.is_empty() {
        return Err(Error::Empty("sensitive neuron set"));
    }
    sensitive
        .iter()
        .map(|a| {
            if a.layer != traces_layer || a.index >= width {
                Err(Error::AddressOutOfRange { layer: a.layer, index: a.index, width })
            } else {
                Ok(a.index)
            }
        })
        .collect()
}

fn score_row<T: Scalar>(original: &[T], mutated: &[T], idx: &[usize]) -> T {
    idx.iter().fold(T::zero(), |acc, &i| acc + (original[i] - mutated[i]).abs())
}

/// TNSScore of one pair: the summed sensitivity over the sensitive neurons.
pub fn tnss_score<T: Scalar>(traces: &PairTraces<T>, pair: usize, sensitive: &[NeuronAddress]) -> Result<T> {
    let idx = check_addresses(traces.layer(), traces.width(), sensitive)?;
    Ok(score_row(traces.original(pair), traces.mutated(pair), &idx))
}

/// TNSScore of every pair.
pub fn tnss_scores<T: Scalar>(traces: &PairTraces<T>, sensitive: &[NeuronAddress]) -> Result<Vec<T>> {
    let idx = check_addresses(traces.layer(), traces.width(), sensitive)?;
    Ok(parallel::map_indexed(traces.len(), |p| score_row(traces.original(p), traces.mutated(p), &idx)))
}
