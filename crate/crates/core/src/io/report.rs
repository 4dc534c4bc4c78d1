//! Selection and evaluation reports: pretty JSON plus companion CSV files.
//!
//! Every writer emits fields in a fixed order and formats percentages with two
//! decimals, so exporting the same report twice yields identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};
use crate::nss::NeuronAddress;

/// Ground truth and the model's prediction on the candidate image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub predicted: usize,
}

impl Prediction {
    pub fn is_fault(&self) -> bool {
        self.label != self.predicted
    }
}

/// JSON has no infinities; non-finite scores are written as strings.
mod scores_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub fn serialize<S: Serializer>(scores: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        scores.as_ref().map(|v| v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
        let raw: Option<Vec<Repr>> = Option::deserialize(d)?;
        raw.map(|v| {
            v.into_iter()
                .map(|r| match r {
                    Repr::Num(x) => Ok(x),
                    Repr::Text(t) => match t.as_str() {
                        "inf" => Ok(f64::INFINITY),
                        "-inf" => Ok(f64::NEG_INFINITY),
                        "nan" => Ok(f64::NAN),
                        other => Err(serde::de::Error::custom(format!("bad score `{other}`"))),
                    },
                })
                .collect()
        })
        .transpose()
    }
}

pub fn format_score(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selector: String,
    pub candidate_count: usize,
    pub budget: usize,
    /// The first `budget` entries of `order`.
    pub selected: Vec<usize>,
    /// Every candidate in priority order.
    pub order: Vec<usize>,
    /// Per-candidate score by candidate index, for score-based selectors.
    #[serde(with = "scores_serde")]
    pub scores: Option<Vec<f64>>,
    pub sensitive_neurons: Vec<NeuronAddress>,
    /// Coverage after each greedy pick, for coverage selectors.
    pub coverage: Vec<f64>,
    /// Per-candidate ground truth and prediction on the candidate image.
    pub predictions: Vec<Prediction>,
    pub config: BTreeMap<String, String>,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `rank,index,score,label,predicted`, one row per selected candidate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,index,score,label,predicted\n");
        for (rank, &i) in self.selected.iter().enumerate() {
            let score = self.scores.as_ref().map(|s| format_score(s[i])).unwrap_or_default();
            let (label, predicted) = self
                .predictions
                .get(i)
                .map(|p| (p.label.to_string(), p.predicted.to_string()))
                .unwrap_or_default();
            let _ = writeln!(out, "{},{i},{score},{label},{predicted}", rank + 1);
        }
        out
    }
}

/// Writes `path` (JSON) and the CSV next to it with the extension replaced.
/// Returns the CSV path.
pub fn export_selection(report: &SelectionReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    write_file(path, report.to_json()?.as_bytes())?;
    let csv = path.with_extension("csv");
    write_file(&csv, report.to_csv().as_bytes())?;
    Ok(csv)
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<SelectionReport> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidParameter("report is not UTF-8".into()))?;
    SelectionReport::from_json(&text)
}

pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdrRow {
    pub selector: String,
    pub budget: f64,
    pub selected: usize,
    pub fdr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtcrCurve {
    /// `(budget fraction, rate)` over the budget grid.
    pub points: Vec<(f64, f64)>,
    /// Mean rate over the grid as a percentage.
    pub auc: f64,
}

/// Fault-type coverage of one selector; `None` when the candidates contain no
/// fault at all and the curve is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtcrEntry {
    pub selector: String,
    pub curve: Option<FtcrCurve>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub selector: String,
    pub budget: f64,
    pub scoring_secs: f64,
    pub ordering_secs: f64,
}

impl TimingRow {
    pub fn total_secs(&self) -> f64 {
        self.scoring_secs + self.ordering_secs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainRow {
    pub selector: String,
    pub seed: u64,
    pub selected: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

impl RetrainRow {
    pub fn delta(&self) -> f64 {
        self.accuracy_after - self.accuracy_before
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fdr: Vec<FdrRow>,
    pub ftcr: Vec<FtcrEntry>,
    pub retrain: Vec<RetrainRow>,
    pub config: BTreeMap<String, String>,
}

fn ordered_unique<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

fn ordered_budgets(budgets: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for b in budgets {
        if !out.contains(&b) {
            out.push(b);
        }
    }
    out
}

/// Wide FDR table: `budget_pct` then one column per selector (in first-seen
/// order), values as percentages.
pub fn fdr_csv(rows: &[FdrRow]) -> String {
    let selectors = ordered_unique(rows.iter().map(|r| r.selector.as_str()));
    let budgets = ordered_budgets(rows.iter().map(|r| r.budget));
    let mut out = String::from("budget_pct");
    for s in &selectors {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for b in budgets {
        out.push_str(&pct(b));
        for s in &selectors {
            let cell = rows.iter().find(|r| r.budget == b && r.selector == *s).map(|r| pct(r.fdr)).unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

/// Long-form FTCR curves: `selector,budget_pct,rate_pct`; undefined curves
/// are written as a single `no-fault` row.
pub fn ftcr_csv(entries: &[FtcrEntry]) -> String {
    let mut out = String::from("selector,budget_pct,rate_pct\n");
    for e in entries {
        match &e.curve {
            Some(c) => {
                for &(b, r) in &c.points {
                    let _ = writeln!(out, "{},{},{}", e.selector, pct(b), pct(r));
                }
            }
            None => {
                let _ = writeln!(out, "{},,no-fault", e.selector);
            }
        }
    }
    out
}

pub fn ftcr_auc_csv(entries: &[FtcrEntry]) -> String {
    let mut out = String::from("selector,auc_pct\n");
    for e in entries {
        let auc = e.curve.as_ref().map(|c| format!("{:.2}", c.auc)).unwrap_or_else(|| "no-fault".into());
        let _ = writeln!(out, "{},{auc}", e.selector);
    }
    out
}

pub fn timings_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("selector,budget_pct,scoring_secs,ordering_secs,total_secs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.selector,
            pct(r.budget),
            r.scoring_secs,
            r.ordering_secs,
            r.total_secs()
        );
    }
    out
}

pub fn retrain_csv(rows: &[RetrainRow]) -> String {
    let mut out = String::from("selector,seed,selected,accuracy_before_pct,accuracy_after_pct,delta_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.selector,
            r.seed,
            r.selected,
            pct(r.accuracy_before),
            pct(r.accuracy_after),
            pct(r.delta())
        );
    }
    out
}

/// Rows of a parameter sweep: one FDR value per setting (e.g. `k` or layer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub fdr: f64,
}

pub fn sweep_csv(name: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{name},fdr_pct\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.setting, pct(r.fdr));
    }
    out
}

/// Writes `eval.json` plus `fdr.csv`, `ftcr.csv`, `ftcr_auc.csv` and (when
/// present) `retrain.csv` into `dir`. Returns the written paths.
pub fn export_eval(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    let mut files = vec![
        ("eval.json", json),
        ("fdr.csv", fdr_csv(&report.fdr)),
        ("ftcr.csv", ftcr_csv(&report.ftcr)),
        ("ftcr_auc.csv", ftcr_auc_csv(&report.ftcr)),
    ];
    if !report.retrain.is_empty() {
        files.push(("retrain.csv", retrain_csv(&report.retrain)));
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            write_file(&path, body.as_bytes())?;
            Ok(path)
        })
        .collect()
}
