//! Neuron sensitivity, sensitive-neuron identification and sensitivity-ranked
//! selection.
//!
//! For a pair `(x, x')` the sensitivity of neuron `i` is
//! `|N_i(x) - N_i(x')|`. Summing it over many pairs ranks neurons; summing it
//! over the top fraction of neurons scores a single pair.

pub mod identify;
pub mod rank;
pub mod sensitivity;
pub mod traces;

pub use identify::{accumulate_sensitivity, identify_sensitive, top_neurons, Identification, SensitiveFraction};
pub use rank::{identify_with_subset, select, select_with_subset, NssOutcome};
pub use rank::rank_descending;
pub use sensitivity::{neuron_sensitivity, trace_sensitivity, tnss_score, tnss_scores, NeuronAddress, SensitivityVector};
pub use traces::PairTraces;
