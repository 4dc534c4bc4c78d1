use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nss::io::idx::{encode_images, encode_labels, quantize_pixel};
use nss::io::{load_selection, save_model_bundle, ModelBundle};
use nss::mutation::{CandidateLog, LogEntry};
use nss::nn::{LayerSpec, Param, Sequential, Weights};
use nss::tensor::Tensor;
use tempfile::TempDir;

fn nss_cmd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nss"))
        .current_dir(dir)
        .env_remove("NSS_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn nss")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = nss_cmd(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn write_idx_pair(dir: &Path, stem: &str, rows: usize, cols: usize, pixels: &[f32], labels: &[u8]) -> (String, String) {
    let images = dir.join(format!("{stem}-images"));
    let label_file = dir.join(format!("{stem}-labels"));
    let bytes: Vec<u8> = pixels.iter().map(|&p| quantize_pixel(p)).collect();
    std::fs::write(&images, encode_images(labels.len(), rows, cols, &bytes)).unwrap();
    std::fs::write(&label_file, encode_labels(labels)).unwrap();
    (images.display().to_string(), label_file.display().to_string())
}

/// 2-neuron model whose hidden layer reproduces the worked sensitivity
/// example: inputs pass through an identity dense layer and a ReLU.
fn table_two_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let model = Sequential::new(
        vec![LayerSpec::dense(2, 2), LayerSpec::Relu, LayerSpec::dense(2, 2)],
        vec![2],
        2,
    )
    .unwrap();
    let eye = || Tensor::new(vec![2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
    let weights = Weights::new(
        &model,
        vec![
            Some(Param { weight: eye(), bias: Tensor::zeros(vec![2]) }),
            None,
            Some(Param { weight: eye(), bias: Tensor::zeros(vec![2]) }),
        ],
    )
    .unwrap();
    let bundle = dir.join("table2-model");
    save_model_bundle(&ModelBundle::new(model, weights).unwrap(), &bundle).unwrap();

    let originals = [0.4, 0.5, 0.2, 0.4, 0.4, 0.5, 0.8, 0.5];
    let mutated = [0.3, 0.4, 0.2, 0.4, 0.3, 0.3, 0.7, 0.45];
    let labels = [0u8, 1, 0, 1];
    let (images, label_file) = write_idx_pair(dir, "table2", 1, 2, &originals, &labels);
    write_idx_pair(dir, "table2-mutated", 1, 2, &mutated, &labels);
    let log = CandidateLog {
        format_version: 1,
        seed: None,
        images,
        labels: label_file,
        materialized_images: Some("table2-mutated-images".into()),
        entries: (0..4).map(|i| LogEntry { index: i, label: labels[i] as usize, mutation: None }).collect(),
    };
    let log_path = dir.join("table2-candidates.json");
    std::fs::write(&log_path, log.to_json().unwrap()).unwrap();
    (bundle, log_path)
}

/// Three classes of 6x6 images: a bright top band, left band or diagonal,
/// plus deterministic noise.
fn toy_split(dir: &Path, stem: &str, n: usize, offset: usize) -> (String, String) {
    let mut pixels = Vec::with_capacity(n * 36);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i + offset) % 3;
        for r in 0..6 {
            for c in 0..6 {
                let on = match class {
                    0 => r < 2,
                    1 => c < 2,
                    _ => r == c,
                };
                let noise = (((i + offset) * 131 + r * 17 + c * 7) % 23) as f32 / 60.0;
                pixels.push(if on { 0.9 - noise } else { noise });
            }
        }
        labels.push(class as u8);
    }
    write_idx_pair(dir, stem, 6, 6, &pixels, &labels)
}

struct Toy {
    dir: TempDir,
    train: (String, String),
    test: (String, String),
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let train = toy_split(dir.path(), "train", 400, 0);
        let test = toy_split(dir.path(), "test", 300, 1);
        Toy { dir, train, test }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn train_args(&self) -> Vec<String> {
        [
            "--train-images",
            &self.train.0,
            "--train-labels",
            &self.train.1,
            "--test-images",
            &self.test.0,
            "--test-labels",
            &self.test.1,
            "--epochs",
            "2",
            "--set",
            "model.hidden=[12]",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    /// Trains a model and generates candidates under `base`.
    fn prepare(&self, base: &str) -> (String, String) {
        let mut args = vec!["train".to_string(), "--out".into(), format!("{base}/train")];
        args.extend(self.train_args());
        ok(self.path(), &args.iter().map(String::as_str).collect::<Vec<_>>());
        ok(
            self.path(),
            &["mutate", "--out", &format!("{base}/mutate"), "--seed", "7", "--test-images", &self.test.0, "--test-labels", &self.test.1],
        );
        (format!("{base}/train/model"), format!("{base}/mutate/candidates.json"))
    }
}

/// Every file under `dir` except wall-clock timing tables, by relative path.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if !path.file_name().unwrap().to_str().unwrap().starts_with("timings") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn help_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["train", "mutate", "identify", "select", "eval", "bench", "sweep"] {
        let out = nss_cmd(dir.path(), &[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "help wrote files");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["select", "--no-such-flag"][..], &["frobnicate"][..], &[][..]] {
        let out = nss_cmd(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn validation_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, candidates) = table_two_fixture(dir.path());
    let b = bundle.to_str().unwrap();
    let c = candidates.to_str().unwrap();
    let code = |args: &[&str]| nss_cmd(dir.path(), args).status.code();
    assert_eq!(code(&["select", "--out", "o", "--candidates", c]), Some(1), "missing bundle");
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c, "--budget", "2.5"]), Some(1));
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c, "--k", "0"]), Some(1));
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c, "--selector", "npc"]), Some(1));
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c, "--selector", "dsa"]), Some(1));
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c, "--set", "nss.kk=1"]), Some(1));
    std::fs::write(bundle.join("weights.bin"), [0u8; 3]).unwrap();
    assert_eq!(code(&["select", "--out", "o", "--bundle", b, "--candidates", c]), Some(2), "corrupt weights");
}

#[test]
fn table_two_fixture_ranks_x3_first() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, candidates) = table_two_fixture(dir.path());
    ok(
        dir.path(),
        &[
            "select", "--out", "out", "--bundle", bundle.to_str().unwrap(), "--candidates", candidates.to_str().unwrap(),
            "--selector", "nss", "--budget", "0.05", "--k", "0.10",
        ],
    );
    let report = load_selection(dir.path().join("out/selection.json")).unwrap();
    assert_eq!(report.selected, vec![2]);
    assert_eq!(report.order, vec![2, 0, 3, 1]);
    assert_eq!(report.sensitive_neurons.len(), 1);
    assert_eq!(report.sensitive_neurons[0].index, 1);
    assert!(dir.path().join("out/provenance.json").exists());
}

#[test]
fn mutate_is_byte_identical() {
    let toy = Toy::new();
    for out in ["a", "b"] {
        ok(toy.path(), &["mutate", "--out", out, "--seed", "7", "--test-images", &toy.test.0, "--test-labels", &toy.test.1]);
    }
    let a = std::fs::read(toy.path().join("a/candidates.json")).unwrap();
    assert_eq!(a, std::fs::read(toy.path().join("b/candidates.json")).unwrap());
    assert_eq!(
        std::fs::read(toy.path().join("a/provenance.json")).unwrap(),
        std::fs::read(toy.path().join("b/provenance.json")).unwrap()
    );
}

#[test]
fn eval_writes_one_fdr_row_per_budget() {
    let toy = Toy::new();
    let (bundle, candidates) = toy.prepare("p");
    ok(
        toy.path(),
        &[
            "eval", "--out", "e", "--bundle", &bundle, "--candidates", &candidates, "--budgets", "5,10,15,20",
            "--selectors", "nss,random,gini,nac",
        ],
    );
    let fdr = std::fs::read_to_string(toy.path().join("e/fdr.csv")).unwrap();
    let lines: Vec<&str> = fdr.lines().collect();
    assert_eq!(lines[0], "budget_pct,nss,random,gini,nac");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("5.00,"));

    // the same table from the saved reports alone
    let reports = ["nss", "random", "gini", "nac"].map(|s| format!("e/reports/{s}.json")).join(",");
    ok(toy.path(), &["eval", "--out", "r", "--reports", &reports, "--budgets", "5,10,15,20"]);
    assert_eq!(fdr, std::fs::read_to_string(toy.path().join("r/fdr.csv")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, candidates) = table_two_fixture(dir.path());
    let cfg = format!(
        "bundle = {:?}\ncandidates = {:?}\nselect.selector = \"random\"\nselect.budget = 2\n",
        bundle.display().to_string(),
        candidates.display().to_string()
    );
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    ok(dir.path(), &["select", "--config", "run.toml", "--out", "a"]);
    let r = load_selection(dir.path().join("a/selection.json")).unwrap();
    assert_eq!((r.selector.as_str(), r.budget), ("random", 2));
    ok(dir.path(), &["select", "--config", "run.toml", "--out", "b", "--selector", "nss"]);
    assert_eq!(load_selection(dir.path().join("b/selection.json")).unwrap().selector, "nss");
}

#[test]
fn output_dir_defaults_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, candidates) = table_two_fixture(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_nss"))
        .current_dir(dir.path())
        .env("NSS_OUT_DIR", "from-env")
        .args(["identify", "--bundle", bundle.to_str().unwrap(), "--candidates", candidates.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("from-env/sensitive.json")).unwrap();
    assert!(text.contains("\"sensitive\""));
}

#[test]
fn every_subcommand_is_deterministic_across_worker_counts() {
    let toy = Toy::new();
    let runs: Vec<(&str, Vec<String>)> = {
        let (bundle, candidates) = ("p/train/model".to_string(), "p/mutate/candidates.json".to_string());
        let inputs = vec![
            "--bundle".to_string(),
            bundle,
            "--candidates".into(),
            candidates,
            "--train-images".into(),
            toy.train.0.clone(),
            "--train-labels".into(),
            toy.train.1.clone(),
        ];
        let train = toy.train_args();
        let with = |extra: &[&str]| inputs.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect::<Vec<_>>();
        vec![
            ("train", train),
            ("mutate", vec!["--seed".into(), "7".into(), "--test-images".into(), toy.test.0.clone(), "--test-labels".into(), toy.test.1.clone(), "--materialize".into()]),
            ("identify", with(&["--k", "0.25"])),
            ("select", with(&["--selector", "dsa", "--budget", "10%"])),
            ("select", with(&["--selector", "kmnc", "--budget", "10%", "--set", "baseline.kmnc_bins=20"])),
            (
                "eval",
                with(&["--retrain", "--test-images", &toy.test.0, "--test-labels", &toy.test.1, "--set", "retrain.schedule.epochs=1"]),
            ),
            ("bench", with(&["--budgets", "5,10", "--selectors", "nss,gini"])),
            ("sweep", with(&[])),
        ]
    };
    toy.prepare("p");
    for (i, (sub, args)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (run, workers) in [(0, "1"), (1, "4"), (2, "4")] {
            let out = format!("det/{i}-{sub}-{run}");
            let mut full = vec![sub.to_string(), "--out".into(), out.clone(), "--workers".into(), workers.into()];
            full.extend(args.iter().cloned());
            ok(toy.path(), &full.iter().map(String::as_str).collect::<Vec<_>>());
            outputs.push(artifacts(&toy.path().join(&out)));
        }
        assert!(!outputs[0].is_empty(), "{sub} wrote nothing");
        assert_eq!(outputs[0], outputs[1], "{sub}: workers 1 vs 4");
        assert_eq!(outputs[1], outputs[2], "{sub}: repeat");
    }
}
