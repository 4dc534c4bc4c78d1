use std::path::{Path, PathBuf};

use nss::baselines::BaselineConfig;
use nss::select::{Budget, NssConfig, SelectorKind};
use nss::train::TrainConfig;
use serde::{Deserialize, Deserializer, Serialize};
use toml::{Table, Value};

use crate::Failure;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NSS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "nss-out";

/// Everything a subcommand may read. Loaded from a TOML file with dotted keys
/// and overridden by flags.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Never part of the echoed config: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mutate: MutateConfig,
    pub select: SelectConfig,
    pub nss: NssConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub retrain: RetrainConfig,
    pub bench: BenchConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Class count when the labels do not cover every class.
    pub classes: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Cnn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
    pub channels: usize,
    /// Width of the CNN's dense hidden layer.
    pub cnn_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { arch: Arch::Mlp, hidden: vec![128], channels: 8, cnn_hidden: 64 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutateConfig {
    /// Also write the mutated images as an IDX file next to the log.
    pub materialize: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub selector: SelectorKind,
    #[serde(deserialize_with = "scalar_string")]
    pub budget: String,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { selector: SelectorKind::Nss, budget: "5%".into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Budgets in percent of the candidate set.
    pub budgets: Vec<f64>,
    pub selectors: Vec<SelectorKind>,
    /// Persisted selection reports to evaluate instead of running selectors.
    pub reports: Vec<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { budgets: vec![5.0, 10.0, 15.0, 20.0], selectors: SelectorKind::ALL.to_vec(), reports: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainConfig {
    pub enabled: bool,
    /// Selection budget whose cases are added to the training set.
    #[serde(deserialize_with = "scalar_string")]
    pub budget: String,
    pub schedule: TrainConfig,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self { enabled: false, budget: "5%".into(), schedule: TrainConfig::retrain() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub selectors: Vec<SelectorKind>,
    /// Budgets in percent of the candidate set.
    pub budgets: Vec<f64>,
    pub scaling: bool,
    pub scaling_n: usize,
    pub kmnc_n: usize,
    pub kmnc_neurons: usize,
    pub kmnc_bins: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            selectors: SelectorKind::ALL.to_vec(),
            budgets: vec![5.0, 10.0, 15.0, 20.0],
            scaling: false,
            scaling_n: 100_000,
            kmnc_n: 2_000,
            kmnc_neurons: 64,
            kmnc_bins: 10,
            repeats: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Sensitive-neuron ratios in percent.
    pub ks: Vec<f64>,
    /// Tap layers; empty means every encoder tap.
    pub layers: Vec<usize>,
    #[serde(deserialize_with = "scalar_string")]
    pub budget: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { ks: vec![1.0, 5.0, 10.0, 20.0, 100.0], layers: Vec::new(), budget: "20%".into() }
    }
}

/// Budgets may be written as `"5%"`, `0.05` or `10`.
fn scalar_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(format!("{f:?}")),
        other => Err(serde::de::Error::custom(format!("expected a budget, found {}", other.type_str()))),
    }
}

pub fn parse_budget(s: &str) -> Result<Budget, Failure> {
    s.parse().map_err(|e: nss::Error| Failure::Validation(e.to_string()))
}

pub fn percents(values: &[f64]) -> Result<Vec<f64>, Failure> {
    values
        .iter()
        .map(|&p| {
            if p > 0.0 && p <= 100.0 {
                Ok(p / 100.0)
            } else {
                Err(Failure::Validation(format!("percentage {p} outside (0, 100]")))
            }
        })
        .collect()
}

/// A flag value: a TOML literal when it parses as one, a string otherwise.
pub fn literal(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert(table: &mut Table, key: &str, value: Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Failure::Validation(format!("bad key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Failure::Validation(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Reads the config file (if any), applies `overrides` in order and fills
/// section seeds from the top-level `seed` where they are not set.
pub fn load(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, Failure> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<Table>(&text)
                .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    for (k, v) in overrides {
        insert(&mut table, k, v.clone())?;
    }
    if let Some(seed) = table.get("seed").cloned() {
        for section in ["train", "nss", "baseline"] {
            let entry = table.entry(section).or_insert_with(|| Value::Table(Table::new()));
            if let Some(t) = entry.as_table_mut() {
                t.entry("seed").or_insert_with(|| seed.clone());
            }
        }
    }
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| Failure::Validation(e.to_string()))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// The value of a required path setting, which must exist.
pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    let path = value.as_deref().ok_or_else(|| Failure::Validation(format!("`{key}` is required")))?;
    if !path.exists() {
        return Err(Failure::Validation(format!("{key} `{}` does not exist", path.display())));
    }
    Ok(path)
}
