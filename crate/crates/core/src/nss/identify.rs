use crate::error::{Error, Result};
use crate::nss::rank::rank_descending;
use crate::nss::sensitivity::{NeuronAddress, SensitivityVector};
use crate::nss::traces::PairTraces;
use crate::parallel;
use crate::scalar::Scalar;

/// Fraction `k` of neurons kept as sensitive, `0 < k <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SensitiveFraction(f64);

impl SensitiveFraction {
    pub const DEFAULT: SensitiveFraction = SensitiveFraction(0.10);

    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && k <= 1.0 {
            Ok(Self(k))
        } else {
            Err(Error::InvalidParameter(format!("sensitive fraction {k} outside (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `ceil(k * n)`, at least one neuron. A small tolerance keeps products
    /// such as `0.07 * 100` from rounding up past the exact integer.
    pub fn count(self, n: usize) -> usize {
        let raw = self.0 * n as f64;
        ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).clamp(1, n.max(1))
    }
}

impl Default for SensitiveFraction {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Per-neuron sensitivity accumulated over the given pairs (all pairs when
/// `pairs` is `None`). Pairs are summed in fixed chunks combined by a
/// pairwise tree, so the result is independent of the worker count.
pub fn accumulate_sensitivity<T: Scalar>(traces: &PairTraces<T>, pairs: Option<&[usize]>) -> SensitivityVector<T> {
    let n = pairs.map_or(traces.len(), <[usize]>::len);
    let pick = |i: usize| pairs.map_or(i, |p| p[i]);
    let width = traces.width();
    parallel::chunked_tree_reduce(
        n,
        |range| {
            let mut acc = SensitivityVector::zeros(traces.layer(), width);
            for i in range {
                let p = pick(i);
                let (a, b) = (traces.original(p), traces.mutated(p));
                for (slot, (&u, &v)) in acc.values.iter_mut().zip(a.iter().zip(b)) {
                    *slot = *slot + (v - u).abs();
                }
            }
            acc
        },
        |mut a, b| {
            a.add_assign(&b);
            a
        },
    )
    .unwrap_or_else(|| SensitivityVector::zeros(traces.layer(), width))
}

/// The `count` most sensitive neurons, most sensitive first; ties go to the
/// lower flat index.
pub fn top_neurons<T: Scalar>(ns_list: &SensitivityVector<T>, count: usize) -> Vec<NeuronAddress> {
    rank_descending(&ns_list.values)
        .into_iter()
        .take(count)
        .map(|index| NeuronAddress { layer: ns_list.layer, index })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identification<T> {
    /// Accumulated sensitivity of every neuron of the tapped layer.
    pub ns_list: SensitivityVector<T>,
    /// The top `ceil(k * n)` neurons in descending sensitivity.
    pub sensitive: Vec<NeuronAddress>,
}

/// Sensitive Neuron Identifier: accumulates sensitivity over all pairs and
/// keeps the top fraction `k` of neurons.
pub fn identify_sensitive<T: Scalar>(traces: &PairTraces<T>, k: SensitiveFraction) -> Result<Identification<T>> {
    identify_on(traces, k, None)
}

pub(crate) fn identify_on<T: Scalar>(
    traces: &PairTraces<T>,
    k: SensitiveFraction,
    pairs: Option<&[usize]>,
) -> Result<Identification<T>> {
    if traces.is_empty() || pairs.is_some_and(<[usize]>::is_empty) {
        return Err(Error::Empty("candidate pairs"));
    }
    let ns_list = accumulate_sensitivity(traces, pairs);
    let sensitive = top_neurons(&ns_list, k.count(traces.width()));
    Ok(Identification { ns_list, sensitive })
}
