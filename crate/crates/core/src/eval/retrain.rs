use crate::error::{Error, Result};
use crate::io::LabeledDataset;
use crate::mutation::CandidateSet;
use crate::nn::{Sequential, Weights};
use crate::tensor::Tensor;
use crate::train::{accuracy, train, EpochStats, TrainConfig};

/// A selected case handed to labelling; `label` is `None` until labelled.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCase {
    pub image: Tensor<f32>,
    pub label: Option<usize>,
}

/// The selected candidates' images `x'` with their carried-over labels.
pub fn cases_from_selection(candidates: &CandidateSet, selected: &[usize]) -> Result<Vec<LabeledCase>> {
    selected
        .iter()
        .map(|&i| {
            let pair = candidates
                .pairs()
                .get(i)
                .ok_or_else(|| Error::InvalidParameter(format!("selected index {i} outside the candidate set")))?;
            Ok(LabeledCase { image: pair.mutated.clone(), label: Some(pair.label) })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrainOutcome {
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub history: Vec<EpochStats>,
}

impl RetrainOutcome {
    pub fn delta(&self) -> f64 {
        self.accuracy_after - self.accuracy_before
    }
}

/// Fine-tunes a copy of `weights` on `train_set` plus the labelled `cases`
/// and reports test accuracy before and after.
pub fn retrain_experiment(
    model: &Sequential,
    weights: &Weights<f32>,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    cases: &[LabeledCase],
    config: &TrainConfig,
) -> Result<RetrainOutcome> {
    let labels = cases
        .iter()
        .enumerate()
        .map(|(i, c)| c.label.ok_or(Error::MissingLabel(i)))
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<Tensor<f32>> = cases.iter().map(|c| c.image.clone()).collect();
    let augmented = if cases.is_empty() { train_set.clone() } else { train_set.concat(&images, &labels)? };
    let accuracy_before = accuracy(model, weights, test_set)?;
    let out = train(model, weights.clone(), &augmented, config, None)?;
    let accuracy_after = accuracy(model, &out.weights, test_set)?;
    Ok(RetrainOutcome { accuracy_before, accuracy_after, history: out.history })
}
