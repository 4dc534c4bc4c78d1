use crate::baselines::BaselineConfig;
use crate::error::Result;
use crate::eval::metrics::fdr_from_report;
use crate::io::report::{pct, SweepRow};
use crate::nn::LayerId;
use crate::select::{Budget, NssConfig, Selection, SelectorKind};

/// Sensitive-neuron ratios of the k sweep: 1%, 5%, 10%, 20%, 100%.
pub const SWEEP_K: [f64; 5] = [0.01, 0.05, 0.10, 0.20, 1.00];

/// NSS FDR at `budget` for each sensitive fraction in `ks` (rows keyed by the
/// percentage).
pub fn sweep_k(selection: &Selection, ks: &[f64], budget: Budget, base: &NssConfig) -> Result<Vec<SweepRow>> {
    ks.iter()
        .map(|&k| {
            let cfg = NssConfig { k, ..base.clone() };
            let (report, _) = selection.run(SelectorKind::Nss, budget, &cfg, &BaselineConfig::default())?;
            Ok(SweepRow { setting: pct(k), fdr: fdr_from_report(&report)? })
        })
        .collect()
}

/// NSS FDR at `budget` with sensitive neurons sampled from each layer.
pub fn sweep_layers(
    selection: &Selection,
    layers: &[LayerId],
    budget: Budget,
    base: &NssConfig,
) -> Result<Vec<SweepRow>> {
    layers
        .iter()
        .map(|&layer| {
            let cfg = NssConfig { layer: Some(layer), ..base.clone() };
            let (report, _) = selection.run(SelectorKind::Nss, budget, &cfg, &BaselineConfig::default())?;
            Ok(SweepRow { setting: layer.to_string(), fdr: fdr_from_report(&report)? })
        })
        .collect()
}
