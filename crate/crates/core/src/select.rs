//! Runs any selector over a candidate set and packages the result as a
//! [`SelectionReport`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{
    dsa_scores, gini_scores, greedy_cover, kmnc_profile, kmnc_sets, nac_sets, random_order, BaselineConfig,
    CoverageProfile, DsaReference,
};
use crate::error::{Error, Result};
use crate::io::{LabeledDataset, Prediction, SelectionReport};
use crate::mutation::CandidateSet;
use crate::nn::{argmax, forward, model_input, probabilities, LayerId, Sequential, Weights};
use crate::nss::{identify_with_subset, rank_descending, tnss_scores, PairTraces, SensitiveFraction};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Selection budget: an absolute count or a fraction of the candidate set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    Count(usize),
    Fraction(f64),
}

impl Budget {
    /// Number of candidates to select out of `n`. Fractions round down with a
    /// small tolerance (so `0.29 * 100` gives 29) and select at least one.
    pub fn resolve(self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Empty("candidate set"));
        }
        match self {
            Budget::Count(0) => Err(Error::InvalidParameter("budget must be positive".into())),
            Budget::Count(c) if c > n => Err(Error::BudgetExceeds { requested: c, available: n }),
            Budget::Count(c) => Ok(c),
            Budget::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((f * n as f64 + 1e-9).floor() as usize).clamp(1, n)),
            Budget::Fraction(f) => Err(Error::InvalidParameter(format!("budget fraction {f} outside (0, 1]"))),
        }
    }

    pub fn fraction_of(self, n: usize) -> f64 {
        match self {
            Budget::Count(c) => c as f64 / n.max(1) as f64,
            Budget::Fraction(f) => f,
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// Accepts `5%`, `0.05` (fractions) and `10` (a count).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("cannot parse budget `{s}`"));
        let budget = if let Some(p) = s.strip_suffix('%') {
            Budget::Fraction(p.trim().parse::<f64>().map_err(|_| bad())? / 100.0)
        } else if s.contains(['.', 'e', 'E']) {
            Budget::Fraction(s.parse().map_err(|_| bad())?)
        } else {
            Budget::Count(s.parse().map_err(|_| bad())?)
        };
        match budget {
            Budget::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(bad()),
            Budget::Count(0) => Err(bad()),
            b => Ok(b),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Count(c) => write!(f, "{c}"),
            Budget::Fraction(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Nss,
    Random,
    Gini,
    Nac,
    Kmnc,
    Dsa,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 6] =
        [SelectorKind::Nss, SelectorKind::Random, SelectorKind::Gini, SelectorKind::Nac, SelectorKind::Kmnc, SelectorKind::Dsa];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Nss => "nss",
            SelectorKind::Random => "random",
            SelectorKind::Gini => "gini",
            SelectorKind::Nac => "nac",
            SelectorKind::Kmnc => "kmnc",
            SelectorKind::Dsa => "dsa",
        }
    }

    pub fn needs_training_data(self) -> bool {
        matches!(self, SelectorKind::Kmnc | SelectorKind::Dsa)
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown selector `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NssConfig {
    /// Fraction of the tapped layer's neurons kept as sensitive.
    pub k: f64,
    /// Tapped layer (`None` = last encoder layer).
    pub layer: Option<LayerId>,
    /// Fraction of the candidate pairs used to identify sensitive neurons.
    pub identification_fraction: f64,
    pub seed: u64,
}

impl Default for NssConfig {
    fn default() -> Self {
        Self { k: SensitiveFraction::DEFAULT.get(), layer: None, identification_fraction: 1.0, seed: 0 }
    }
}

/// Wall-clock time per selection phase. `scoring` covers everything up to the
/// per-candidate scores or coverage sets, `ordering` the sort or greedy loop.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub scoring: Duration,
    pub ordering: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.scoring + self.ordering
    }
}

/// A model and candidate set prepared for selection. Predictions on the
/// candidate images are computed once and copied into every report.
pub struct Selection<'a> {
    model: &'a Sequential,
    weights: &'a Weights<f32>,
    candidates: &'a CandidateSet,
    train: Option<&'a LabeledDataset>,
    kmnc_profile: Option<&'a CoverageProfile<f32>>,
    mutated: Tensor<f32>,
    predictions: Vec<Prediction>,
}

/// Flattened `[n, width]` outputs of `layer` and the predicted classes.
fn layer_outputs(
    model: &Sequential,
    weights: &Weights<f32>,
    batch: &Tensor<f32>,
    layer: LayerId,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let (logits, trace) = forward(model, weights, batch, &BTreeSet::from([layer]))?;
    let acts = trace.into_layer(layer).ok_or(Error::MissingLayer(layer))?;
    let n = acts.batch();
    let width = acts.row_len();
    let predicted = logits.rows().map(argmax).collect();
    Ok((acts.reshape(vec![n, width])?, predicted))
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

impl<'a> Selection<'a> {
    pub fn new(model: &'a Sequential, weights: &'a Weights<f32>, candidates: &'a CandidateSet) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let mutated = model_input::<f32>(model, &candidates.mutated())?;
        let (logits, _) = forward(model, weights, &mutated, &BTreeSet::new())?;
        let predictions = logits
            .rows()
            .zip(candidates.labels())
            .map(|(row, label)| Prediction { label, predicted: argmax(row) })
            .collect();
        Ok(Self { model, weights, candidates, train: None, kmnc_profile: None, mutated, predictions })
    }

    /// Training data for KMNC profiling and the DSA reference.
    pub fn with_training(mut self, train: &'a LabeledDataset) -> Self {
        self.train = Some(train);
        self
    }

    /// A precomputed KMNC profile (otherwise built from the training data).
    pub fn with_kmnc_profile(mut self, profile: &'a CoverageProfile<f32>) -> Self {
        self.kmnc_profile = Some(profile);
        self
    }

    pub fn model(&self) -> &Sequential {
        self.model
    }

    pub fn candidates(&self) -> &CandidateSet {
        self.candidates
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn training(&self, kind: SelectorKind) -> Result<&LabeledDataset> {
        self.train.ok_or_else(|| Error::InvalidParameter(format!("{kind} needs training data")))
    }

    fn train_outputs(&self, kind: SelectorKind, layer: LayerId) -> Result<(Tensor<f32>, &LabeledDataset)> {
        let train = self.training(kind)?;
        let batch = model_input::<f32>(self.model, train.images())?;
        Ok((layer_outputs(self.model, self.weights, &batch, layer)?.0, train))
    }

    /// Builds the KMNC profile of `layer` from the training data.
    pub fn build_kmnc_profile(&self, layer: LayerId, bins: usize) -> Result<CoverageProfile<f32>> {
        let (acts, _) = self.train_outputs(SelectorKind::Kmnc, layer)?;
        kmnc_profile(layer, &acts, bins)
    }

    pub fn run(
        &self,
        kind: SelectorKind,
        budget: Budget,
        nss: &NssConfig,
        baseline: &BaselineConfig,
    ) -> Result<(SelectionReport, PhaseTimings)> {
        let n = self.len();
        let budget_count = budget.resolve(n)?;
        let mut config = BTreeMap::from([("budget".to_string(), budget.to_string())]);
        let mut sensitive_neurons = Vec::new();
        let mut coverage = Vec::new();
        let mut scores = None;
        let mut timings = PhaseTimings::default();
        let model = self.model;

        let order = match kind {
            SelectorKind::Nss => {
                let layer = nss.layer.unwrap_or_else(|| model.last_encoder_layer());
                let k = SensitiveFraction::new(nss.k)?;
                config.insert("k".into(), nss.k.to_string());
                config.insert("layer".into(), layer.to_string());
                config.insert("identification_fraction".into(), nss.identification_fraction.to_string());
                config.insert("seed".into(), nss.seed.to_string());
                let start = Instant::now();
                let traces = PairTraces::<f32>::capture(model, self.weights, self.candidates, layer)?;
                let id = identify_with_subset(&traces, k, nss.identification_fraction, nss.seed)?;
                let s = tnss_scores(&traces, &id.sensitive)?;
                timings.scoring = start.elapsed();
                let start = Instant::now();
                let order = rank_descending(&s);
                timings.ordering = start.elapsed();
                sensitive_neurons = id.sensitive;
                scores = Some(to_f64(&s));
                order
            }
            SelectorKind::Random => {
                // timed as zero: the draw costs nothing next to labelling
                config.insert("seed".into(), baseline.seed.to_string());
                random_order(n, baseline.seed)
            }
            SelectorKind::Gini => {
                let start = Instant::now();
                let probs = probabilities(model, self.weights, &self.mutated)?;
                let s = gini_scores(&probs);
                timings.scoring = start.elapsed();
                let start = Instant::now();
                let order = rank_descending(&s);
                timings.ordering = start.elapsed();
                scores = Some(to_f64(&s));
                order
            }
            SelectorKind::Nac | SelectorKind::Kmnc => {
                baseline.validate(model.classes())?;
                let layer = baseline.layer.unwrap_or_else(|| model.last_encoder_layer());
                config.insert("layer".into(), layer.to_string());
                let start = Instant::now();
                let (acts, _) = layer_outputs(model, self.weights, &self.mutated, layer)?;
                let sets = if kind == SelectorKind::Nac {
                    config.insert("nac_threshold".into(), baseline.nac_threshold.to_string());
                    nac_sets(&acts, baseline.nac_threshold)
                } else {
                    config.insert("kmnc_bins".into(), baseline.kmnc_bins.to_string());
                    let built;
                    let profile = match self.kmnc_profile {
                        Some(p) => p,
                        None => {
                            built = self.build_kmnc_profile(layer, baseline.kmnc_bins)?;
                            &built
                        }
                    };
                    if profile.layer != layer {
                        return Err(Error::InvalidParameter(format!(
                            "KMNC profile is for layer {}, selection taps layer {layer}",
                            profile.layer
                        )));
                    }
                    kmnc_sets(profile, &acts)?
                };
                timings.scoring = start.elapsed();
                let start = Instant::now();
                let out = greedy_cover(&sets, budget_count);
                timings.ordering = start.elapsed();
                coverage = out.coverage;
                out.order
            }
            SelectorKind::Dsa => {
                baseline.validate(model.classes())?;
                let layer = baseline.layer.unwrap_or_else(|| model.last_encoder_layer());
                config.insert("layer".into(), layer.to_string());
                config.insert("dsa_train_cap".into(), baseline.dsa_train_cap.to_string());
                config.insert("seed".into(), baseline.seed.to_string());
                let start = Instant::now();
                let (train_acts, train) = self.train_outputs(kind, layer)?;
                let reference =
                    DsaReference::new(&train_acts, train.labels(), model.classes(), baseline.dsa_train_cap, baseline.seed)?;
                let (acts, predicted) = layer_outputs(model, self.weights, &self.mutated, layer)?;
                let s = dsa_scores(&reference, &acts, &predicted)?;
                timings.scoring = start.elapsed();
                let start = Instant::now();
                let order = rank_descending(&s);
                timings.ordering = start.elapsed();
                scores = Some(to_f64(&s));
                order
            }
        };

        let report = SelectionReport {
            selector: kind.name().into(),
            candidate_count: n,
            budget: budget_count,
            selected: order[..budget_count].to_vec(),
            order,
            scores,
            sensitive_neurons,
            coverage,
            predictions: self.predictions.clone(),
            config,
        };
        Ok((report, timings))
    }
}
