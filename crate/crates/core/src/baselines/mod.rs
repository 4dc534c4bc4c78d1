//! Comparison selectors: random sampling, Gini impurity, greedy neuron
//! activation coverage (NAC), greedy k-multisection coverage (KMNC) and
//! distance-based surprise adequacy (DSA).
//!
//! Every selector here consumes one image per candidate; the harness in
//! [`crate::select`] feeds it the mutated image `x'`.

pub mod coverage;
pub mod dsa;
pub mod gini;
pub mod random;

pub use coverage::{
    greedy_cover, kmnc_profile, kmnc_sets, nac_activated, nac_sets, CoverageProfile, CoverageSets, GreedyOutcome,
};
pub use dsa::{dsa_score, dsa_scores, DsaReference};
pub use gini::{gini_impurity, gini_scores};
pub use random::{random_order, random_select};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LayerId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub nac_threshold: f64,
    pub kmnc_bins: usize,
    /// Cap on cached training activations for DSA, split evenly over classes.
    pub dsa_train_cap: usize,
    /// Layer whose outputs NAC, KMNC and DSA read (`None` = last encoder layer).
    pub layer: Option<LayerId>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { nac_threshold: 0.5, kmnc_bins: 1000, dsa_train_cap: 1000, layer: None, seed: 0 }
    }
}

impl BaselineConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.nac_threshold) {
            return Err(Error::InvalidParameter(format!("NAC threshold {} outside [0, 1)", self.nac_threshold)));
        }
        if self.kmnc_bins == 0 {
            return Err(Error::InvalidParameter("KMNC needs at least one bin".into()));
        }
        if self.dsa_train_cap < classes {
            return Err(Error::InvalidParameter(format!(
                "DSA cap {} is below the class count {classes}",
                self.dsa_train_cap
            )));
        }
        Ok(())
    }
}
