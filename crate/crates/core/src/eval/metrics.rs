use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::io::report::{FdrRow, FtcrCurve, FtcrEntry};
use crate::io::{Prediction, SelectionReport};
use crate::select::Budget;

/// Fraction of the selected candidates the model gets wrong.
pub fn fdr(selected: &[usize], predictions: &[Prediction]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Empty("selection"));
    }
    let mut wrong = 0usize;
    for &i in selected {
        let p = predictions.get(i).ok_or_else(|| {
            Error::InvalidParameter(format!("selected index {i} outside {} candidates", predictions.len()))
        })?;
        wrong += usize::from(p.is_fault());
    }
    Ok(wrong as f64 / selected.len() as f64)
}

/// FDR from a persisted report alone, using its cached predictions.
pub fn fdr_from_report(report: &SelectionReport) -> Result<f64> {
    fdr(&report.selected, &report.predictions)
}

/// Distinct `(label, predicted)` pairs among the misclassified cases.
pub fn fault_types<'a>(cases: impl IntoIterator<Item = &'a Prediction>) -> BTreeSet<(usize, usize)> {
    cases.into_iter().filter(|p| p.is_fault()).map(|p| (p.label, p.predicted)).collect()
}

/// Budgets 1%, 2%, ..., 20%.
pub fn budget_grid() -> Vec<f64> {
    (1..=20).map(|p| p as f64 / 100.0).collect()
}

/// Fault-type coverage of the prefixes of `order` at each budget: the share of
/// all fault types (over every candidate) present in the top `b` candidates.
/// The AUC is the mean rate over `budgets`, as a percentage.
pub fn ftcr_curve(order: &[usize], predictions: &[Prediction], budgets: &[f64]) -> Result<FtcrCurve> {
    let n = predictions.len();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidParameter("priority order must list every candidate exactly once".into()));
    }
    if budgets.is_empty() {
        return Err(Error::Empty("budget grid"));
    }
    let total = fault_types(predictions).len();
    if total == 0 {
        return Err(Error::NoFaults);
    }
    // distinct types within each prefix length
    let mut types = BTreeSet::new();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &i in order {
        let p = predictions[i];
        if p.is_fault() {
            types.insert((p.label, p.predicted));
        }
        prefix.push(types.len());
    }
    let points = budgets
        .iter()
        .map(|&b| Ok((b, prefix[Budget::Fraction(b).resolve(n)?] as f64 / total as f64)))
        .collect::<Result<Vec<_>>>()?;
    let auc = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64 * 100.0;
    Ok(FtcrCurve { points, auc })
}

/// FDR of each report's priority order at every budget, and its fault-type
/// coverage curve over the standard grid (`None` when nothing is faulty).
pub fn evaluate_reports(reports: &[SelectionReport], budgets: &[f64]) -> Result<(Vec<FdrRow>, Vec<FtcrEntry>)> {
    let mut fdr_rows = Vec::new();
    let mut ftcr = Vec::new();
    for r in reports {
        for &b in budgets {
            let count = Budget::Fraction(b).resolve(r.order.len())?;
            fdr_rows.push(FdrRow {
                selector: r.selector.clone(),
                budget: b,
                selected: count,
                fdr: fdr(&r.order[..count], &r.predictions)?,
            });
        }
        let curve = match ftcr_curve(&r.order, &r.predictions, &budget_grid()) {
            Ok(c) => Some(c),
            Err(Error::NoFaults) => None,
            Err(e) => return Err(e),
        };
        ftcr.push(FtcrEntry { selector: r.selector.clone(), curve });
    }
    Ok((fdr_rows, ftcr))
}
