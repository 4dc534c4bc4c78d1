use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};
use crate::nn::LayerId;
use crate::parallel;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// What each candidate covers, as ids in `0..id_space`. `coverable` is the
/// number of ids that can be covered at all (the coverage denominator).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageSets {
    pub id_space: usize,
    pub coverable: usize,
    pub sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    /// Picked candidates followed by the rest in ascending index order.
    pub order: Vec<usize>,
    /// Coverage fraction after each of the `budget` picks.
    pub coverage: Vec<f64>,
}

/// Greedy maximum coverage: each step picks the unused candidate adding the
/// most uncovered ids (lowest index on ties, and lowest unused index once no
/// candidate adds anything). Deliberately the plain `O(budget * sum |set|)`
/// scan with no lazy-gain shortcuts.
pub fn greedy_cover(cover: &CoverageSets, budget: usize) -> GreedyOutcome {
    let n = cover.sets.len();
    let budget = budget.min(n);
    let mut covered = vec![false; cover.id_space];
    let mut used = vec![false; n];
    let mut count = 0usize;
    let mut order = Vec::with_capacity(n);
    let mut coverage = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best: Option<(usize, usize)> = None;
        for (c, set) in cover.sets.iter().enumerate() {
            if used[c] {
                continue;
            }
            let gain = set.iter().filter(|&&id| !covered[id]).count();
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let pick = best.map(|(c, _)| c).unwrap_or_else(|| used.iter().position(|u| !u).expect("budget <= n"));
        used[pick] = true;
        for &id in &cover.sets[pick] {
            if !covered[id] {
                covered[id] = true;
                count += 1;
            }
        }
        order.push(pick);
        coverage.push(if cover.coverable == 0 { 0.0 } else { count as f64 / cover.coverable as f64 });
    }
    order.extend((0..n).filter(|&c| !used[c]));
    GreedyOutcome { order, coverage }
}

/// Neurons of one input whose min-max scaled output exceeds `threshold`. A
/// constant row activates nothing.
pub fn nac_activated<T: Real>(row: &[T], threshold: f64) -> Vec<usize> {
    let (lo, hi) = row.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > T::zero()) || !span.is_finite() {
        return Vec::new();
    }
    let t = T::from_f64_lossy(threshold);
    row.iter().enumerate().filter(|(_, &v)| (v - lo) / span > t).map(|(i, _)| i).collect()
}

/// NAC coverage sets for `[n, width]` activations.
pub fn nac_sets<T: Real>(activations: &Tensor<T>, threshold: f64) -> CoverageSets {
    let width = activations.row_len();
    CoverageSets {
        id_space: width,
        coverable: width,
        sets: parallel::map_indexed(activations.batch(), |i| nac_activated(activations.row(i), threshold)),
    }
}

pub const KMNC_MAGIC: &[u8; 4] = b"KMNC";
pub const KMNC_VERSION: u32 = 1;

/// Per-neuron output range observed on training data, split into `bins`
/// equal sections.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageProfile<T> {
    pub layer: LayerId,
    pub bins: usize,
    pub low: Vec<T>,
    pub high: Vec<T>,
}

impl<T: Real> CoverageProfile<T> {
    pub fn width(&self) -> usize {
        self.low.len()
    }

    /// Bin of neuron `i` for output `v`. Outputs outside `[low, high]` fall in
    /// no bin; `v == high` belongs to the last bin; a constant neuron
    /// (`low == high`) has the single bin 0.
    pub fn bin_of(&self, i: usize, v: T) -> Option<usize> {
        let (lo, hi) = (self.low[i], self.high[i]);
        if !(v >= lo && v <= hi) {
            return None;
        }
        if hi == lo {
            return Some(0);
        }
        let b = ((v - lo) / (hi - lo) * T::from_count(self.bins)).floor().to_usize().unwrap_or(0);
        Some(b.min(self.bins - 1))
    }

    pub fn coverable_bins(&self, i: usize) -> usize {
        if self.low[i] == self.high[i] {
            1
        } else {
            self.bins
        }
    }

    /// Covered `(neuron, bin)` ids (`neuron * bins + bin`) of one input.
    pub fn covered(&self, row: &[T]) -> Vec<usize> {
        row.iter().enumerate().filter_map(|(i, &v)| self.bin_of(i, v).map(|b| i * self.bins + b)).collect()
    }
}

/// Per-neuron min/max of `[n, width]` training activations at `layer`.
pub fn kmnc_profile<T: Real>(layer: LayerId, activations: &Tensor<T>, bins: usize) -> Result<CoverageProfile<T>> {
    if activations.batch() == 0 {
        return Err(Error::Empty("training set"));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("KMNC needs at least one bin".into()));
    }
    let width = activations.row_len();
    let (low, high) = parallel::chunked_tree_reduce(
        activations.batch(),
        |range| {
            let mut low = vec![T::infinity(); width];
            let mut high = vec![T::neg_infinity(); width];
            for r in range {
                for (i, &v) in activations.row(r).iter().enumerate() {
                    low[i] = low[i].min(v);
                    high[i] = high[i].max(v);
                }
            }
            (low, high)
        },
        |(mut la, mut ha), (lb, hb)| {
            for i in 0..width {
                la[i] = la[i].min(lb[i]);
                ha[i] = ha[i].max(hb[i]);
            }
            (la, ha)
        },
    )
    .expect("non-empty");
    Ok(CoverageProfile { layer, bins, low, high })
}

/// KMNC coverage sets for `[n, width]` candidate activations.
pub fn kmnc_sets<T: Real>(profile: &CoverageProfile<T>, activations: &Tensor<T>) -> Result<CoverageSets> {
    if activations.row_len() != profile.width() {
        return Err(Error::InvalidShape(format!(
            "activations have {} neurons, profile has {}",
            activations.row_len(),
            profile.width()
        )));
    }
    Ok(CoverageSets {
        id_space: profile.width() * profile.bins,
        coverable: (0..profile.width()).map(|i| profile.coverable_bins(i)).sum(),
        sets: parallel::map_indexed(activations.batch(), |i| profile.covered(activations.row(i))),
    })
}

impl CoverageProfile<f32> {
    /// Binary sidecar: `KMNC`, then little-endian u32 version, layer, bins and
    /// neuron count, then `(low, high)` f32 pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.width());
        out.extend_from_slice(KMNC_MAGIC);
        for v in [KMNC_VERSION, self.layer as u32, self.bins as u32, self.width() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (lo, hi) in self.low.iter().zip(&self.high) {
            out.extend_from_slice(&lo.to_le_bytes());
            out.extend_from_slice(&hi.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != KMNC_MAGIC {
            return Err(Error::InvalidParameter("not a KMNC profile".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let version = word(0);
        if version != KMNC_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: KMNC_VERSION });
        }
        let (layer, bins, n) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if bins == 0 || bytes.len() != 20 + 8 * n {
            return Err(Error::InvalidParameter(format!("KMNC profile for {n} neurons has {} bytes", bytes.len())));
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let low: Vec<f32> = (0..n).map(|i| f(20 + 8 * i)).collect();
        let high: Vec<f32> = (0..n).map(|i| f(24 + 8 * i)).collect();
        if low.iter().zip(&high).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("KMNC profile has low > high".into()));
        }
        Ok(Self { layer, bins, low, high })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}
