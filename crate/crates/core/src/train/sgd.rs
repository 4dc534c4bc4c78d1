use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::LabeledDataset;
use crate::nn::{model_input, predict, Sequential, Weights};
use crate::scalar::Real;
use crate::tensor::Tensor;
use crate::train::backprop::batch_partial;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Zero-based epochs at whose start the rate is multiplied by
    /// `lr_decay_factor` (a multi-step schedule).
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.01,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
            momentum: 0.9,
            nesterov: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning schedule used by the retraining experiment.
    pub fn retrain() -> Self {
        Self { learning_rate: 0.001, lr_decay_epochs: vec![5, 8], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        // lr = 0 is allowed as a no-op control run
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("decay factor {} must be positive", self.lr_decay_factor)));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.lr_decay_factor.powi(steps as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// One-based epoch number.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Accuracy of the in-epoch predictions (before each batch's update).
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub weights: Weights<T>,
    pub history: Vec<EpochStats>,
}

/// Fraction of `dataset` the model classifies correctly.
pub fn accuracy<T: Real>(model: &Sequential, weights: &Weights<T>, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let batch = model_input::<T>(model, dataset.images())?;
    let pred = predict(model, weights, &batch)?;
    let hits = pred.iter().zip(dataset.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / dataset.len() as f64)
}

pub fn train<T: Real>(
    model: &Sequential,
    init: Weights<T>,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    test: Option<&LabeledDataset>,
) -> Result<TrainOutcome<T>> {
    train_with(model, init, dataset, config, test, |_, _| Ok(()))
}

fn gather<T: Real>(inputs: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let mut shape = inputs.shape().to_vec();
    shape[0] = rows.len();
    let data = rows.iter().flat_map(|&r| inputs.row(r).iter().copied()).collect();
    Tensor::new(shape, data).expect("row gather")
}

/// Mini-batch SGD with (optionally Nesterov) momentum:
/// `v = mu * v + g`, then `w -= lr * (g + mu * v)` (Nesterov) or `w -= lr * v`.
///
/// Each epoch shuffles with its own substream of `config.seed`. `on_epoch`
/// sees the statistics and weights after every epoch (for checkpoints).
pub fn train_with<T: Real>(
    model: &Sequential,
    init: Weights<T>,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    test: Option<&LabeledDataset>,
    mut on_epoch: impl FnMut(&EpochStats, &Weights<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    init.validate(model)?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let inputs = model_input::<T>(model, dataset.images())?;
    let labels = dataset.labels();
    let mu = T::from_f64_lossy(config.momentum);
    let mut weights = init;
    let mut velocity = Weights::<T>::zeros(model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = T::from_f64_lossy(config.learning_rate_at(epoch));
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;

        for rows in order.chunks(config.batch_size) {
            let batch = gather(&inputs, rows);
            let batch_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let part = batch_partial(model, &weights, &batch, &batch_labels)?;
            let loss = part.loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, loss });
            }
            loss_sum += loss;
            correct += part.correct;
            let scale = T::one() / T::from_count(rows.len());
            for ((w, v), g) in weights.tensors_mut().zip(velocity.tensors_mut()).zip(part.grads.tensors()) {
                for ((w, v), &g) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    let g = g * scale;
                    *v = mu * *v + g;
                    let step = if config.nesterov { g + mu * *v } else { *v };
                    *w = *w - lr * step;
                }
            }
        }

        let stats = EpochStats {
            epoch: epoch + 1,
            learning_rate: config.learning_rate_at(epoch),
            loss: loss_sum / dataset.len() as f64,
            train_accuracy: correct as f64 / dataset.len() as f64,
            test_accuracy: test.map(|t| accuracy(model, &weights, t)).transpose()?,
        };
        on_epoch(&stats, &weights)?;
        history.push(stats);
    }
    Ok(TrainOutcome { weights, history })
}

/// Training history as CSV, one row per epoch.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,learning_rate,loss,train_accuracy,test_accuracy\n");
    for s in history {
        let test = s.test_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{},{:.6},{:.6},{}\n", s.epoch, s.learning_rate, s.loss, s.train_accuracy, test));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::init_weights;

    fn blobs(n: usize) -> LabeledDataset {
        // two separable classes on a 2x2 "image"
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let jitter = (i as f32 * 0.37).sin().abs() * 0.2;
            let px = if c == 0 { [0.9 - jitter, 0.1, 0.1 + jitter, 0.0] } else { [0.1, 0.8 + jitter, 0.0, 0.9 - jitter] };
            data.extend_from_slice(&px);
            labels.push(c);
        }
        LabeledDataset::new(Tensor::new(vec![n, 1, 2, 2], data).unwrap(), labels, 2).unwrap()
    }

    fn model() -> Sequential {
        Sequential::mlp(&[4, 6, 2]).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let m = model();
        let init = init_weights::<f32>(&m, 1);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 2, ..TrainConfig::default() };
        let out = train(&m, init.clone(), &blobs(40), &cfg, None).unwrap();
        for (a, b) in out.weights.tensors().zip(init.tensors()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let m = model();
        let cfg = TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() };
        let ds = blobs(64);
        let a = train(&m, init_weights::<f32>(&m, 2), &ds, &cfg, Some(&ds)).unwrap();
        let b = train(&m, init_weights::<f32>(&m, 2), &ds, &cfg, Some(&ds)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 3);
    }

    #[test]
    fn learns_a_separable_problem() {
        let m = model();
        let cfg = TrainConfig { epochs: 20, batch_size: 8, learning_rate: 0.05, ..TrainConfig::default() };
        let ds = blobs(64);
        let out = train(&m, init_weights::<f32>(&m, 3), &ds, &cfg, None).unwrap();
        assert_eq!(accuracy(&m, &out.weights, &ds).unwrap(), 1.0);
        assert!(out.history.last().unwrap().loss < out.history[0].loss);
    }

    #[test]
    fn multi_step_schedule() {
        let cfg = TrainConfig::retrain();
        let rates: Vec<f64> = (0..10).map(|e| cfg.learning_rate_at(e)).collect();
        assert_eq!(rates[4], 0.001);
        assert!((rates[5] - 1e-4).abs() < 1e-12 && (rates[8] - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let m = model();
        let cfg = TrainConfig { learning_rate: 1e30, momentum: 0.0, epochs: 5, batch_size: 4, ..TrainConfig::default() };
        match train(&m, init_weights::<f32>(&m, 0), &blobs(32), &cfg, None) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn checkpoint_callback_sees_every_epoch() {
        let m = model();
        let cfg = TrainConfig { epochs: 4, ..TrainConfig::default() };
        let mut seen = Vec::new();
        train_with(&m, init_weights::<f32>(&m, 0), &blobs(16), &cfg, None, |s, _| {
            seen.push(s.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4]);
    }
}
