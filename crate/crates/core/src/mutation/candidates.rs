use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::LabeledDataset;
use crate::mutation::spec::{sample_spec, MutationSpec};
use crate::mutation::transform::mutate;
use crate::parallel;
use crate::tensor::Tensor;

/// An unlabeled input `x`, its benign mutation `x'` and the label carried over
/// from `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePair {
    pub index: usize,
    pub original: Tensor<f32>,
    pub mutated: Tensor<f32>,
    pub label: usize,
    /// `None` when `x'` was supplied directly rather than generated.
    pub mutation: Option<MutationSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pairs: Vec<CandidatePair>,
}

impl CandidateSet {
    pub fn new(pairs: Vec<CandidatePair>) -> Result<Self> {
        let first = pairs.first().ok_or(Error::Empty("candidate set"))?;
        let shape = first.original.shape().to_vec();
        for (i, p) in pairs.iter().enumerate() {
            if p.index != i {
                return Err(Error::InvalidParameter(format!("candidate at position {i} has index {}", p.index)));
            }
            if p.original.shape() != shape.as_slice() || p.mutated.shape() != shape.as_slice() {
                return Err(Error::InvalidShape(format!("candidate {i} has mismatched image shapes")));
            }
        }
        Ok(Self { pairs })
    }

    /// Builds pairs from separately supplied original and mutated images.
    pub fn from_images(originals: &LabeledDataset, mutated: &Tensor<f32>) -> Result<Self> {
        if mutated.shape() != originals.images().shape() {
            return Err(Error::InvalidShape(format!(
                "mutated images {:?} vs originals {:?}",
                mutated.shape(),
                originals.images().shape()
            )));
        }
        let pairs = (0..originals.len())
            .map(|i| CandidatePair {
                index: i,
                original: originals.image(i),
                mutated: mutated.item(i),
                label: originals.labels()[i],
                mutation: None,
            })
            .collect();
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[CandidatePair] {
        &self.pairs
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    /// All originals stacked as `[n, c, h, w]`.
    pub fn originals(&self) -> Tensor<f32> {
        Tensor::stack(self.pairs.iter().map(|p| &p.original)).expect("validated shapes")
    }

    /// All mutated images stacked as `[n, c, h, w]`.
    pub fn mutated(&self) -> Tensor<f32> {
        Tensor::stack(self.pairs.iter().map(|p| &p.mutated)).expect("validated shapes")
    }

    /// The pairs at `indices`, renumbered from zero.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let pairs = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| CandidatePair { index: k, ..self.pairs[i].clone() })
            .collect();
        Self::new(pairs)
    }

    /// The mutated images as a labeled dataset (for retraining or export).
    pub fn mutated_dataset(&self, class_count: usize) -> Result<LabeledDataset> {
        LabeledDataset::new(self.mutated(), self.labels(), class_count)
    }
}

/// Independent random stream for candidate `index` under `seed`.
pub fn pair_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn build(dataset: &LabeledDataset, spec_for: impl Fn(usize) -> MutationSpec + Sync + Send) -> Result<CandidateSet> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let pairs = parallel::map_indexed(dataset.len(), |i| {
        let original = dataset.image(i);
        let spec = spec_for(i);
        let mutated = mutate(&original, &spec)?;
        Ok(CandidatePair { index: i, original, mutated, label: dataset.labels()[i], mutation: Some(spec) })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    CandidateSet::new(pairs)
}

/// Pairs every dataset element with one randomly drawn benign mutation.
/// Item `i` draws from its own substream of `seed`, so the result does not
/// depend on scheduling.
pub fn generate_candidates(dataset: &LabeledDataset, seed: u64) -> Result<CandidateSet> {
    build(dataset, |i| sample_spec(&mut pair_rng(seed, i)))
}

/// Applies one fixed mutation to every element.
pub fn generate_with_spec(dataset: &LabeledDataset, spec: MutationSpec) -> Result<CandidateSet> {
    spec.validate()?;
    build(dataset, |_| spec)
}

pub const CANDIDATE_LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: usize,
    pub label: usize,
    pub mutation: Option<MutationSpec>,
}

/// Persistent form of a candidate set: a reference to the source dataset and
/// the per-item mutation, enough to regenerate every `x'` bit-exactly.
/// `materialized_images` optionally names an IDX dump of the mutated images
/// (always used when entries carry no mutation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub format_version: u32,
    pub seed: Option<u64>,
    pub images: String,
    pub labels: String,
    pub materialized_images: Option<String>,
    pub entries: Vec<LogEntry>,
}

impl CandidateLog {
    pub fn new(set: &CandidateSet, seed: Option<u64>, images: String, labels: String) -> Self {
        let entries =
            set.pairs().iter().map(|p| LogEntry { index: p.index, label: p.label, mutation: p.mutation }).collect();
        Self { format_version: CANDIDATE_LOG_VERSION, seed, images, labels, materialized_images: None, entries }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: Self = serde_json::from_str(text)?;
        if log.format_version != CANDIDATE_LOG_VERSION {
            return Err(Error::VersionMismatch { found: log.format_version, expected: CANDIDATE_LOG_VERSION });
        }
        Ok(log)
    }

    /// Rebuilds the candidate set from the source dataset, taking `x'` from
    /// `materialized` when given and regenerating it otherwise.
    pub fn rebuild(&self, dataset: &LabeledDataset, materialized: Option<&Tensor<f32>>) -> Result<CandidateSet> {
        if self.entries.len() != dataset.len() {
            return Err(Error::InvalidParameter(format!(
                "log lists {} candidates but the dataset has {}",
                self.entries.len(),
                dataset.len()
            )));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.index != i || e.label != dataset.labels()[i] {
                return Err(Error::InvalidParameter(format!("log entry {i} does not match the dataset")));
            }
        }
        if let Some(mutated) = materialized {
            let mut set = CandidateSet::from_images(dataset, mutated)?;
            for (p, e) in set.pairs.iter_mut().zip(&self.entries) {
                p.mutation = e.mutation;
            }
            return Ok(set);
        }
        let specs = self
            .entries
            .iter()
            .map(|e| e.mutation.ok_or(Error::InvalidParameter(format!("entry {} has no mutation", e.index))))
            .collect::<Result<Vec<_>>>()?;
        build(dataset, |i| specs[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> LabeledDataset {
        let data = (0..n * 64).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
        LabeledDataset::new(Tensor::new(vec![n, 1, 8, 8], data).unwrap(), (0..n).map(|i| i % 3).collect(), 3).unwrap()
    }

    #[test]
    fn one_pair_per_item_with_labels() {
        let ds = dataset(12);
        let set = generate_candidates(&ds, 5).unwrap();
        assert_eq!(set.len(), 12);
        assert_eq!(set.labels(), ds.labels());
        assert!(set.pairs().iter().all(|p| p.original == ds.image(p.index)));
    }

    #[test]
    fn seeded_generation_is_reproducible_across_pools() {
        let ds = dataset(40);
        let a = parallel::with_workers(Some(1), || generate_candidates(&ds, 9).unwrap());
        let b = parallel::with_workers(Some(4), || generate_candidates(&ds, 9).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, generate_candidates(&ds, 10).unwrap());
    }

    #[test]
    fn empty_dataset_fails() {
        let ds = dataset(2);
        assert!(matches!(ds.subset(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn log_round_trip_regenerates_exactly() {
        let ds = dataset(10);
        let set = generate_candidates(&ds, 3).unwrap();
        let log = CandidateLog::new(&set, Some(3), "img".into(), "lbl".into());
        let back = CandidateLog::from_json(&log.to_json().unwrap()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.rebuild(&ds, None).unwrap(), set);
    }

    #[test]
    fn fixed_spec_mode() {
        let ds = dataset(4);
        let set = generate_with_spec(&ds, MutationSpec::Scale { ratio: 0.8 }).unwrap();
        assert!(set.pairs().iter().all(|p| p.mutation == Some(MutationSpec::Scale { ratio: 0.8 })));
        assert!(generate_with_spec(&ds, MutationSpec::Scale { ratio: 0.1 }).is_err());
    }
}
