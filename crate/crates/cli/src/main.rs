//! `nss`: train models, generate candidates, select, evaluate, benchmark and
//! sweep from the command line.
//!
//! Exit codes: 0 on success, 1 on a usage or validation error, 2 when a run
//! fails.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::artifacts::Artifacts;
use crate::config::{literal, RunConfig};

/// How a command failed.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<nss::Error> for Failure {
    fn from(e: nss::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "nss", version, about = "Neuron-sensitivity guided test input selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and write a model bundle.
    Train(TrainArgs),
    /// Generate one benign mutation per image and write the candidate log.
    Mutate(MutateArgs),
    /// Rank neurons by accumulated sensitivity and keep the top fraction.
    Identify(IdentifyArgs),
    /// Prioritize candidates with one selector and write its report.
    Select(SelectArgs),
    /// FDR, fault-type coverage and optional retraining for several selectors.
    Eval(EvalArgs),
    /// Time each selector's phases and the ordering-scaling checks.
    Bench(BenchArgs),
    /// NSS FDR across sensitive-neuron ratios and tap layers.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file (dotted keys); flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: $NSS_OUT_DIR, else ./nss-out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores]. Never changes results.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key, e.g. `--set baseline.kmnc_bins=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Inputs {
    /// Model bundle directory.
    #[arg(long, value_name = "DIR")]
    bundle: Option<PathBuf>,
    /// Candidate log written by `mutate`.
    #[arg(long, value_name = "FILE")]
    candidates: Option<PathBuf>,
    /// Training images, needed by KMNC and DSA.
    #[arg(long, value_name = "FILE")]
    train_images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    train_labels: Option<PathBuf>,
}

#[derive(Args)]
struct NssArgs {
    /// Fraction of neurons kept as sensitive.
    #[arg(long)]
    k: Option<f64>,
    /// Tapped layer index [default: last encoder layer].
    #[arg(long)]
    layer: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    train_images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    train_labels: Option<PathBuf>,
    /// Test images for per-epoch accuracy.
    #[arg(long, value_name = "FILE")]
    test_images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    test_labels: Option<PathBuf>,
    /// `mlp` or `cnn`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
}

#[derive(Args)]
struct MutateArgs {
    #[command(flatten)]
    common: Common,
    /// Source images (usually the test split).
    #[arg(long, value_name = "FILE")]
    test_images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    test_labels: Option<PathBuf>,
    /// Also write the mutated images as IDX.
    #[arg(long)]
    materialize: bool,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    nss: NssArgs,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    nss: NssArgs,
    /// nss, random, gini, nac, kmnc or dsa.
    #[arg(long)]
    selector: Option<String>,
    /// `5%`, `0.05` (fractions) or `10` (a count).
    #[arg(long)]
    budget: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    nss: NssArgs,
    /// Budgets in percent, e.g. `5,10,15,20`.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    selectors: Option<Vec<String>>,
    /// Saved selection reports to evaluate instead of running selectors.
    #[arg(long, value_delimiter = ',', value_name = "FILE")]
    reports: Option<Vec<PathBuf>>,
    /// Also fine-tune on each selector's picks (needs train and test data).
    #[arg(long)]
    retrain: bool,
    #[arg(long, value_name = "FILE")]
    test_images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    test_labels: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    /// Budgets in percent.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    selectors: Option<Vec<String>>,
    /// Measure ordering-phase scaling on synthetic scores.
    #[arg(long)]
    scaling: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    /// Sensitive-neuron ratios in percent.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    budget: Option<String>,
}

struct Overrides(Vec<(String, Value)>);

impl Overrides {
    fn path(&mut self, key: &str, v: &Option<PathBuf>) {
        if let Some(p) = v {
            self.0.push((key.into(), Value::String(p.display().to_string())));
        }
    }

    fn string(&mut self, key: &str, v: &Option<String>) {
        if let Some(s) = v {
            self.0.push((key.into(), Value::String(s.clone())));
        }
    }

    fn float(&mut self, key: &str, v: Option<f64>) {
        if let Some(x) = v {
            self.0.push((key.into(), Value::Float(x)));
        }
    }

    fn int(&mut self, key: &str, v: Option<usize>) {
        if let Some(x) = v {
            self.0.push((key.into(), Value::Integer(x as i64)));
        }
    }

    fn flag(&mut self, key: &str, v: bool) {
        if v {
            self.0.push((key.into(), Value::Boolean(true)));
        }
    }

    fn list<T: Clone>(&mut self, key: &str, v: &Option<Vec<T>>, f: impl Fn(T) -> Value) {
        if let Some(items) = v {
            self.0.push((key.into(), Value::Array(items.iter().cloned().map(f).collect())));
        }
    }

    fn sets(&mut self, c: &Common) -> Result<(), Failure> {
        for item in &c.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Failure::Validation(format!("--set expects KEY=VALUE, got `{item}`")))?;
            self.0.push((k.trim().into(), literal(v.trim())));
        }
        Ok(())
    }

    fn common(&mut self, c: &Common) {
        if let Some(seed) = c.seed {
            self.0.push(("seed".into(), Value::Integer(seed as i64)));
        }
        self.int("workers", c.workers);
        self.path("out_dir", &c.out);
    }

    fn inputs(&mut self, i: &Inputs) {
        self.path("bundle", &i.bundle);
        self.path("candidates", &i.candidates);
        self.path("data.train_images", &i.train_images);
        self.path("data.train_labels", &i.train_labels);
    }

    fn nss(&mut self, n: &NssArgs) {
        self.float("nss.k", n.k);
        self.int("nss.layer", n.layer);
    }
}

fn selector_list(v: &Option<Vec<String>>) -> Option<Vec<String>> {
    v.as_ref().map(|items| items.iter().map(|s| s.trim().to_lowercase()).collect())
}

fn overrides(command: &Command) -> Result<(&'static str, Option<PathBuf>, Vec<(String, Value)>), Failure> {
    let mut o = Overrides(Vec::new());
    let common = match command {
        Command::Train(a) => &a.common,
        Command::Mutate(a) => &a.common,
        Command::Identify(a) => &a.common,
        Command::Select(a) => &a.common,
        Command::Eval(a) => &a.common,
        Command::Bench(a) => &a.common,
        Command::Sweep(a) => &a.common,
    };
    // `--set` first so dedicated flags win over it
    o.sets(common)?;
    let name = match command {
        Command::Train(a) => {
            o.path("data.train_images", &a.train_images);
            o.path("data.train_labels", &a.train_labels);
            o.path("data.test_images", &a.test_images);
            o.path("data.test_labels", &a.test_labels);
            o.string("model.arch", &a.arch);
            o.int("train.epochs", a.epochs);
            o.int("train.batch_size", a.batch_size);
            o.float("train.learning_rate", a.lr);
            o.float("train.momentum", a.momentum);
            "train"
        }
        Command::Mutate(a) => {
            o.path("data.test_images", &a.test_images);
            o.path("data.test_labels", &a.test_labels);
            o.flag("mutate.materialize", a.materialize);
            "mutate"
        }
        Command::Identify(a) => {
            o.inputs(&a.inputs);
            o.nss(&a.nss);
            "identify"
        }
        Command::Select(a) => {
            o.inputs(&a.inputs);
            o.nss(&a.nss);
            o.string("select.selector", &a.selector.as_ref().map(|s| s.to_lowercase()));
            o.string("select.budget", &a.budget);
            "select"
        }
        Command::Eval(a) => {
            o.inputs(&a.inputs);
            o.nss(&a.nss);
            o.path("data.test_images", &a.test_images);
            o.path("data.test_labels", &a.test_labels);
            o.list("eval.budgets", &a.budgets, Value::Float);
            o.list("eval.selectors", &selector_list(&a.selectors), Value::String);
            o.list("eval.reports", &a.reports, |p| Value::String(p.display().to_string()));
            o.flag("retrain.enabled", a.retrain);
            "eval"
        }
        Command::Bench(a) => {
            o.inputs(&a.inputs);
            o.list("bench.budgets", &a.budgets, Value::Float);
            o.list("bench.selectors", &selector_list(&a.selectors), Value::String);
            o.flag("bench.scaling", a.scaling);
            "bench"
        }
        Command::Sweep(a) => {
            o.inputs(&a.inputs);
            o.list("sweep.ks", &a.ks, Value::Float);
            o.list("sweep.layers", &a.layers, |l| Value::Integer(l as i64));
            o.string("sweep.budget", &a.budget);
            "sweep"
        }
    };
    o.common(common);
    Ok((name, common.config.clone(), o.0))
}

fn run(command: &Command) -> Result<(), Failure> {
    let (name, file, overrides) = overrides(command)?;
    let cfg: RunConfig = config::load(file.as_deref(), &overrides)?;
    let mut art = Artifacts::create(cfg.out_dir())?;
    let body = || match command {
        Command::Train(_) => commands::train_cmd(&cfg, &mut art),
        Command::Mutate(_) => commands::mutate_cmd(&cfg, &mut art),
        Command::Identify(_) => commands::identify_cmd(&cfg, &mut art),
        Command::Select(_) => commands::select_cmd(&cfg, &mut art),
        Command::Eval(_) => commands::eval_cmd(&cfg, &mut art),
        Command::Bench(_) => commands::bench_cmd(&cfg, &mut art),
        Command::Sweep(_) => commands::sweep_cmd(&cfg, &mut art),
    };
    nss::parallel::with_workers(cfg.workers, body)?;
    art.finish(name, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
