use std::path::Path;

use nss::eval::{
    cases_from_selection, evaluate_reports, kmnc_greedy_scaling, nss_ordering_scaling, overhead_bench, retrain_experiment,
    sweep_k, sweep_layers,
};
use nss::io::idx::parse_images;
use nss::io::report::{sweep_csv, timings_csv, RetrainRow, TimingRow};
use nss::io::{
    export_eval, export_selection, load_idx, load_model_bundle, load_selection, save_model_bundle, write_idx,
    EvalReport, LabeledDataset, ModelBundle, SelectionReport,
};
use nss::mutation::{generate_candidates, CandidateLog, CandidateSet};
use nss::nn::Sequential;
use nss::nss::{identify_with_subset, PairTraces, SensitiveFraction};
use nss::select::{Budget, Selection, SelectorKind};
use nss::tensor::Tensor;
use nss::train::{history_csv, init_weights, train};
use serde::Serialize;

use crate::artifacts::Artifacts;
use crate::config::{parse_budget, percents, require, Arch, RunConfig};
use crate::Failure;

pub const BUNDLE_DIR: &str = "model";
pub const CANDIDATE_LOG: &str = "candidates.json";
pub const MATERIALIZED_IMAGES: &str = "candidates-images-idx3-ubyte";
pub const MATERIALIZED_LABELS: &str = "candidates-labels-idx1-ubyte";

/// Errors in user-supplied settings.
fn valid<T>(r: nss::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Validation(e.to_string()))
}

fn load_dataset(
    art: &mut Artifacts,
    images: &Path,
    labels: &Path,
    classes: Option<usize>,
) -> Result<LabeledDataset, Failure> {
    art.input(images)?;
    art.input(labels)?;
    let ds = load_idx(images, labels)?;
    Ok(match classes {
        Some(c) => ds.with_class_count(c)?,
        None => ds,
    })
}

fn train_data(art: &mut Artifacts, cfg: &RunConfig) -> Result<Option<LabeledDataset>, Failure> {
    match (&cfg.data.train_images, &cfg.data.train_labels) {
        (None, None) => Ok(None),
        _ => {
            let images = require(&cfg.data.train_images, "data.train_images")?;
            let labels = require(&cfg.data.train_labels, "data.train_labels")?;
            load_dataset(art, images, labels, cfg.data.classes).map(Some)
        }
    }
}

fn test_data(art: &mut Artifacts, cfg: &RunConfig) -> Result<LabeledDataset, Failure> {
    let images = require(&cfg.data.test_images, "data.test_images")?;
    let labels = require(&cfg.data.test_labels, "data.test_labels")?;
    load_dataset(art, images, labels, cfg.data.classes)
}

fn load_bundle(art: &mut Artifacts, cfg: &RunConfig) -> Result<ModelBundle, Failure> {
    let dir = require(&cfg.bundle, "bundle")?;
    for file in [nss::io::bundle::MANIFEST_FILE, nss::io::bundle::WEIGHTS_FILE] {
        art.input(&dir.join(file))?;
    }
    Ok(load_model_bundle(dir)?)
}

fn read_images(path: &Path) -> Result<Tensor<f32>, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let (h, pixels) = parse_images(&bytes)?;
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Ok(Tensor::new(vec![h.count, 1, h.rows, h.cols], data)?)
}

/// Rebuilds a candidate set from its log. Source paths in the log are used as
/// written; a materialized image file is resolved next to the log.
fn load_candidates(art: &mut Artifacts, cfg: &RunConfig) -> Result<CandidateSet, Failure> {
    let path = require(&cfg.candidates, "candidates")?;
    art.input(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let log = CandidateLog::from_json(&text)?;
    let source = load_dataset(art, Path::new(&log.images), Path::new(&log.labels), cfg.data.classes)?;
    let materialized = match &log.materialized_images {
        Some(name) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(name);
            art.input(&p)?;
            Some(read_images(&p)?)
        }
        None => None,
    };
    Ok(log.rebuild(&source, materialized.as_ref())?)
}

fn check_nss(cfg: &RunConfig) -> Result<(), Failure> {
    valid(SensitiveFraction::new(cfg.nss.k))?;
    let f = cfg.nss.identification_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Failure::Validation(format!("nss.identification_fraction {f} outside (0, 1]")));
    }
    Ok(())
}

fn check_selectors(selectors: &[SelectorKind], train: &Option<LabeledDataset>) -> Result<(), Failure> {
    if selectors.is_empty() {
        return Err(Failure::Validation("no selectors given".into()));
    }
    match selectors.iter().find(|k| k.needs_training_data()) {
        Some(k) if train.is_none() => {
            Err(Failure::Validation(format!("selector {k} needs data.train_images and data.train_labels")))
        }
        _ => Ok(()),
    }
}

fn build_model(cfg: &RunConfig, ds: &LabeledDataset) -> Result<Sequential, Failure> {
    let shape = ds.image_shape();
    let classes = ds.class_count();
    Ok(match cfg.model.arch {
        Arch::Mlp => {
            let mut widths = vec![shape.iter().product()];
            widths.extend(&cfg.model.hidden);
            widths.push(classes);
            Sequential::mlp(&widths)?
        }
        Arch::Cnn => {
            let [c, h, w] = <[usize; 3]>::try_from(shape)
                .map_err(|_| Failure::Validation(format!("a CNN needs [c, h, w] images, got {shape:?}")))?;
            if h < 4 || w < 4 {
                return Err(Failure::Validation(format!("images {shape:?} are too small for the CNN")));
            }
            Sequential::small_cnn([c, h, w], cfg.model.channels, cfg.model.cnn_hidden, classes)?
        }
    })
}

fn to_json(value: &impl Serialize) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn train_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    valid(cfg.train.validate())?;
    let images = require(&cfg.data.train_images, "data.train_images")?;
    let labels = require(&cfg.data.train_labels, "data.train_labels")?;
    let train_set = load_dataset(art, images, labels, cfg.data.classes)?;
    let test_set = match (&cfg.data.test_images, &cfg.data.test_labels) {
        (None, None) => None,
        _ => Some(test_data(art, cfg)?),
    };
    let model = build_model(cfg, &train_set)?;
    let weights = init_weights::<f32>(&model, cfg.train.seed);
    let out = train(&model, weights, &train_set, &cfg.train, test_set.as_ref())?;
    for s in &out.history {
        eprintln!(
            "epoch {} loss {:.4} train {:.4}{}",
            s.epoch,
            s.loss,
            s.train_accuracy,
            s.test_accuracy.map(|a| format!(" test {a:.4}")).unwrap_or_default()
        );
    }
    save_model_bundle(&ModelBundle::new(model, out.weights)?, art.path(BUNDLE_DIR))?;
    art.output(&format!("{BUNDLE_DIR}/{}", nss::io::bundle::MANIFEST_FILE))?;
    art.output(&format!("{BUNDLE_DIR}/{}", nss::io::bundle::WEIGHTS_FILE))?;
    art.write("history.csv", history_csv(&out.history))
}

pub fn mutate_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let images = require(&cfg.data.test_images, "data.test_images")?;
    let labels = require(&cfg.data.test_labels, "data.test_labels")?;
    let source = load_dataset(art, images, labels, cfg.data.classes)?;
    let set = generate_candidates(&source, cfg.seed)?;
    let mut log = CandidateLog::new(
        &set,
        Some(cfg.seed),
        images.display().to_string(),
        labels.display().to_string(),
    );
    if cfg.mutate.materialize {
        let mutated = set.mutated_dataset(source.class_count())?;
        write_idx(&mutated, art.path(MATERIALIZED_IMAGES), art.path(MATERIALIZED_LABELS))?;
        art.output(MATERIALIZED_IMAGES)?;
        art.output(MATERIALIZED_LABELS)?;
        log.materialized_images = Some(MATERIALIZED_IMAGES.into());
    }
    art.write(CANDIDATE_LOG, log.to_json()?)
}

#[derive(Serialize)]
struct IdentifyOutput {
    layer: usize,
    k: f64,
    identification_fraction: f64,
    pairs: usize,
    sensitive: Vec<usize>,
    ns_list: Vec<f64>,
}

pub fn identify_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    check_nss(cfg)?;
    let bundle = load_bundle(art, cfg)?;
    let candidates = load_candidates(art, cfg)?;
    let layer = cfg.nss.layer.unwrap_or_else(|| bundle.model.last_encoder_layer());
    let traces = PairTraces::<f32>::capture(&bundle.model, &bundle.weights, &candidates, layer)?;
    let k = SensitiveFraction::new(cfg.nss.k)?;
    let id = identify_with_subset(&traces, k, cfg.nss.identification_fraction, cfg.nss.seed)?;
    let out = IdentifyOutput {
        layer,
        k: cfg.nss.k,
        identification_fraction: cfg.nss.identification_fraction,
        pairs: traces.len(),
        sensitive: id.sensitive.iter().map(|a| a.index).collect(),
        ns_list: id.ns_list.values.iter().map(|&v| f64::from(v)).collect(),
    };
    let mut csv = String::from("rank,neuron,sensitivity\n");
    for (rank, a) in id.sensitive.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", rank + 1, a.index, id.ns_list.values[a.index]));
    }
    art.write("sensitive.json", to_json(&out)?)?;
    art.write("sensitive.csv", csv)
}

fn timing_row(kind: SelectorKind, budget: f64, t: nss::select::PhaseTimings) -> TimingRow {
    TimingRow {
        selector: kind.name().into(),
        budget,
        scoring_secs: t.scoring.as_secs_f64(),
        ordering_secs: t.ordering.as_secs_f64(),
    }
}

pub fn select_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    check_nss(cfg)?;
    let budget = parse_budget(&cfg.select.budget)?;
    let kind = cfg.select.selector;
    let train_set = train_data(art, cfg)?;
    check_selectors(&[kind], &train_set)?;
    let bundle = load_bundle(art, cfg)?;
    let candidates = load_candidates(art, cfg)?;
    let mut selection = Selection::new(&bundle.model, &bundle.weights, &candidates)?;
    if let Some(t) = &train_set {
        selection = selection.with_training(t);
    }
    let (report, timings) = selection.run(kind, budget, &cfg.nss, &cfg.baseline)?;
    eprintln!("{kind}: selected {} of {}", report.budget, report.candidate_count);
    export_selection(&report, art.path("selection.json"))?;
    art.output("selection.json")?;
    art.output("selection.csv")?;
    let n = report.candidate_count;
    art.write("timings.csv", timings_csv(&[timing_row(kind, budget.fraction_of(n), timings)]))
}

fn run_reports(
    cfg: &RunConfig,
    art: &mut Artifacts,
    selection: &Selection,
    budget: Budget,
) -> Result<Vec<SelectionReport>, Failure> {
    let mut reports = Vec::new();
    for &kind in &cfg.eval.selectors {
        let (report, _) = selection.run(kind, budget, &cfg.nss, &cfg.baseline)?;
        let name = format!("reports/{}.json", kind.name());
        export_selection(&report, art.path(&name))?;
        art.output(&name)?;
        art.output(&format!("reports/{}.csv", kind.name()))?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn eval_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let budgets = percents(&cfg.eval.budgets)?;
    if budgets.is_empty() {
        return Err(Failure::Validation("eval.budgets is empty".into()));
    }
    let retrain_budget = parse_budget(&cfg.retrain.budget)?;
    if cfg.retrain.enabled {
        valid(cfg.retrain.schedule.validate())?;
    }
    let mut config = std::collections::BTreeMap::new();
    config.insert("budgets".to_string(), cfg.eval.budgets.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","));

    let mut retrain = Vec::new();
    let reports = if !cfg.eval.reports.is_empty() {
        if cfg.retrain.enabled {
            return Err(Failure::Validation("retraining needs a model and candidates, not saved reports".into()));
        }
        let mut reports = Vec::new();
        for path in &cfg.eval.reports {
            if !path.exists() {
                return Err(Failure::Validation(format!("report `{}` does not exist", path.display())));
            }
            art.input(path)?;
            reports.push(load_selection(path)?);
        }
        reports
    } else {
        check_nss(cfg)?;
        let train_set = train_data(art, cfg)?;
        check_selectors(&cfg.eval.selectors, &train_set)?;
        if cfg.retrain.enabled && train_set.is_none() {
            return Err(Failure::Validation("retraining needs data.train_images and data.train_labels".into()));
        }
        let test_set = if cfg.retrain.enabled { Some(test_data(art, cfg)?) } else { None };
        let bundle = load_bundle(art, cfg)?;
        let candidates = load_candidates(art, cfg)?;
        let mut selection = Selection::new(&bundle.model, &bundle.weights, &candidates)?;
        if let Some(t) = &train_set {
            selection = selection.with_training(t);
        }
        // coverage selectors order greedily only up to their budget
        let widest = budgets.iter().copied().fold(0.20, f64::max);
        let reports = run_reports(cfg, art, &selection, Budget::Fraction(widest))?;
        config.insert("selection_budget".into(), widest.to_string());
        if let (Some(train_set), Some(test_set)) = (&train_set, &test_set) {
            config.insert("retrain_budget".into(), cfg.retrain.budget.clone());
            for r in &reports {
                let count = retrain_budget.resolve(r.order.len())?;
                let cases = cases_from_selection(&candidates, &r.order[..count])?;
                let out = retrain_experiment(
                    &bundle.model,
                    &bundle.weights,
                    train_set,
                    test_set,
                    &cases,
                    &cfg.retrain.schedule,
                )?;
                eprintln!("retrain {}: {:.4} -> {:.4}", r.selector, out.accuracy_before, out.accuracy_after);
                retrain.push(RetrainRow {
                    selector: r.selector.clone(),
                    seed: cfg.retrain.schedule.seed,
                    selected: count,
                    accuracy_before: out.accuracy_before,
                    accuracy_after: out.accuracy_after,
                });
            }
        }
        reports
    };
    let (fdr, ftcr) = evaluate_reports(&reports, &budgets)?;
    let report = EvalReport { fdr, ftcr, retrain, config };
    for path in export_eval(&report, art.root())? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        art.output(&name)?;
    }
    Ok(())
}

pub fn bench_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let budgets = percents(&cfg.bench.budgets)?;
    let selection_part = cfg.bundle.is_some() || cfg.candidates.is_some();
    if !selection_part && !cfg.bench.scaling {
        return Err(Failure::Validation("bench needs a bundle and candidates, or bench.scaling = true".into()));
    }
    if selection_part {
        check_nss(cfg)?;
        let train_set = train_data(art, cfg)?;
        check_selectors(&cfg.bench.selectors, &train_set)?;
        let bundle = load_bundle(art, cfg)?;
        let candidates = load_candidates(art, cfg)?;
        let mut selection = Selection::new(&bundle.model, &bundle.weights, &candidates)?;
        if let Some(t) = &train_set {
            selection = selection.with_training(t);
        }
        let budgets: Vec<Budget> = budgets.iter().map(|&b| Budget::Fraction(b)).collect();
        let rows = overhead_bench(&selection, &cfg.bench.selectors, &budgets, &cfg.nss, &cfg.baseline)?;
        art.write("timings.csv", timings_csv(&rows))?;
    }
    if cfg.bench.scaling {
        let b = &cfg.bench;
        let (nss_n, nss_2n) = nss_ordering_scaling(b.scaling_n, b.repeats, cfg.seed);
        let (kmnc_n, kmnc_2n) = kmnc_greedy_scaling(b.kmnc_n, b.kmnc_neurons, b.kmnc_bins, 1.0, b.repeats, cfg.seed)?;
        let mut csv = String::from("phase,n,secs_n,secs_2n,ratio\n");
        for (phase, n, t1, t2) in [("nss_ordering", b.scaling_n, nss_n, nss_2n), ("kmnc_greedy", b.kmnc_n, kmnc_n, kmnc_2n)] {
            let (t1, t2) = (t1.as_secs_f64(), t2.as_secs_f64());
            csv.push_str(&format!("{phase},{n},{t1:.6},{t2:.6},{:.3}\n", t2 / t1.max(1e-12)));
        }
        art.write("timings_scaling.csv", csv)?;
    }
    Ok(())
}

pub fn sweep_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    check_nss(cfg)?;
    let ks = percents(&cfg.sweep.ks)?;
    for &k in &ks {
        valid(SensitiveFraction::new(k))?;
    }
    let budget = parse_budget(&cfg.sweep.budget)?;
    let bundle = load_bundle(art, cfg)?;
    let candidates = load_candidates(art, cfg)?;
    let selection = Selection::new(&bundle.model, &bundle.weights, &candidates)?;
    let layers = if cfg.sweep.layers.is_empty() { bundle.model.encoder_taps() } else { cfg.sweep.layers.clone() };
    if !ks.is_empty() {
        art.write("sweep_k.csv", sweep_csv("k_pct", &sweep_k(&selection, &ks, budget, &cfg.nss)?))?;
    }
    art.write("sweep_layers.csv", sweep_csv("layer", &sweep_layers(&selection, &layers, budget, &cfg.nss)?))
}
