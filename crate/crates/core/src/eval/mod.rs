//! Fault detection, fault-type coverage, overhead measurement, parameter
//! sweeps and the retraining experiment.

pub mod bench;
pub mod metrics;
pub mod retrain;
pub mod sweep;

pub use bench::{kmnc_greedy_scaling, nss_ordering_scaling, overhead_bench};
pub use metrics::{budget_grid, evaluate_reports, fault_types, fdr, fdr_from_report, ftcr_curve};
pub use retrain::{cases_from_selection, retrain_experiment, LabeledCase, RetrainOutcome};
pub use sweep::{sweep_k, sweep_layers, SWEEP_K};
