//! Runs the `contig` binary end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

const SMALL: &str = r#"
[synth]
n = 240
n_snps = 300
n_rare_snps = 40
n_genes = 8

[encoder]
hidden_width = 32
repr_dim = 32
proj_dim = 32

[train]
epochs = 3
batch_size = 32

[explain]
reference_batch_size = 16
ig_steps = 16
n_individuals = 8

[eval]
retrieval_batch = 8
"#;

fn contig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = contig(args);
    assert!(
        out.status.success(),
        "contig {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn expect_exit(args: &[&str], code: i32) -> String {
    let out = contig(args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(out.status.code(), Some(code), "contig {args:?}: {stderr}");
    stderr
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let path = root.join("run.toml");
        fs::write(&path, config).unwrap();
        Self {
            _tmp: tmp,
            root,
            config: path,
        }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, stage: &str, out: &str, extra: &[&str]) {
        let out = self.dir(out);
        let mut args = vec![stage, "--config", s(&self.config), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
    }

    /// synth into `data`, pretrain into `model`.
    fn upstream(&self, pretrain_flags: &[&str]) -> (PathBuf, PathBuf) {
        self.run("synth", "data", &[]);
        let data = self.dir("data");
        let mut flags = vec!["--data", s(&data)];
        flags.extend_from_slice(pretrain_flags);
        self.run("pretrain", "model", &flags);
        (data, self.dir("model"))
    }
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn without_header(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("## ")).collect::<Vec<_>>().join("\n")
}

#[test]
fn synth_writes_the_dataset_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    ok(&["synth", "--out", s(&out)]);
    for f in [
        "images.tsv",
        "genotypes.tsv",
        "positions.tsv",
        "burden_annotation.tsv",
        "truth.json",
        "covariates.tsv",
        "masks.tsv",
        "config.resolved.toml",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let pgs: Vec<_> = fs::read_dir(out.join("pgs_weights")).unwrap().collect();
    assert!(!pgs.is_empty());
    let header = fs::read_to_string(out.join("images.tsv")).unwrap();
    assert!(header.starts_with("## contig "), "{}", &header[..40]);
    assert!(header.lines().next().unwrap().contains("seed=42"));
    let sm = summary(&out);
    assert_eq!(sm["stage"], "synth");
    assert_eq!(sm["metrics"]["n_individuals"], 2000);
    assert_eq!(sm["outputs"].as_object().unwrap().len(), 7 + pgs.len());
}

#[test]
fn synth_with_the_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        ok(&["synth", "--seed", "7", "--n", "150", "--n-snps", "200", "--out", s(dir)]);
    }
    ok(&["synth", "--seed", "8", "--n", "150", "--n-snps", "200", "--out", s(&c)]);
    let fa = files_under(&a);
    assert_eq!(fa, files_under(&b));
    assert_ne!(fa["genotypes.tsv"], files_under(&c)["genotypes.tsv"]);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let err = expect_exit(&["synth", "--n", "0", "--out", s(&out)], 2);
    assert!(err.contains("config error"), "{err}");

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearning_rate = 0.1\n").unwrap();
    expect_exit(&["synth", "--config", s(&bad), "--out", s(&out)], 2);
    fs::write(&bad, "[train\n").unwrap();
    expect_exit(&["synth", "--config", s(&bad), "--out", s(&out)], 2);
    expect_exit(&["synth", "--config", s(&tmp.path().join("absent.toml")), "--out", s(&out)], 2);

    let data = tmp.path().join("data");
    for flags in [["--scheme", "middle"], ["--tau", "0"], ["--denominator", "paper"], ["--holdout", "1.5"]] {
        let mut args = vec!["pretrain", "--data", s(&data), "--out", s(&out)];
        args.extend_from_slice(&flags);
        expect_exit(&args, 2);
    }
    expect_exit(&["explain", "--data", s(&data), "--model", s(&data), "--baseline", "median", "--out", s(&out)], 2);
    expect_exit(&["assoc", "--data", s(&data), "--model", s(&data), "--clump-r2", "2", "--out", s(&out)], 2);
}

#[test]
fn flags_override_the_config_file() {
    let ws = Workspace::new("seed = 3\n[synth]\nn = 50\nn_snps = 300\n");
    ws.run("synth", "data", &["--n", "60"]);
    let data = ws.dir("data");
    assert_eq!(summary(&data)["metrics"]["n_individuals"], 60);
    assert_eq!(summary(&data)["seed"], 3);
    let snapshot: toml::Table = fs::read_to_string(data.join("config.resolved.toml")).unwrap().parse().unwrap();
    assert_eq!(snapshot["synth"]["n"].as_integer(), Some(60));
    assert_eq!(snapshot["synth"]["n_snps"].as_integer(), Some(300));
    assert_eq!(snapshot["train"]["tau"].as_float(), Some(0.1));
}

#[test]
fn missing_inputs_name_the_expected_path() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("nowhere");
    let err = expect_exit(&["pretrain", "--data", s(&data), "--out", s(&tmp.path().join("m"))], 3);
    assert!(err.contains(s(&data.join("images.tsv"))), "{err}");

    let ws = Workspace::new(SMALL);
    ws.run("synth", "data", &[]);
    let model = ws.dir("no-model");
    let err = expect_exit(
        &["explain", "--data", s(&ws.dir("data")), "--model", s(&model), "--out", s(&ws.dir("e"))],
        3,
    );
    assert!(err.contains(s(&model.join("summary.json"))), "{err}");
}

#[test]
fn changed_upstream_artifacts_are_stale() {
    let ws = Workspace::new(SMALL);
    let (data, model) = ws.upstream(&[]);
    let explain = ["explain", "--config", s(&ws.config), "--data", s(&data), "--model", s(&model)];

    // a re-generated dataset with another seed no longer matches the model
    let regen = ws.dir("data2");
    ok(&["synth", "--config", s(&ws.config), "--seed", "5", "--out", s(&regen)]);
    let e1 = ws.dir("e1");
    let mut args = explain.to_vec();
    args[4] = s(&regen);
    args.extend(["--out", s(&e1)]);
    let err = expect_exit(&args, 3);
    assert!(err.contains("stale"), "{err}");

    // editing a data file after the synth stage wrote it
    let images = data.join("images.tsv");
    let text = fs::read_to_string(&images).unwrap();
    fs::write(&images, text.replacen("\t", "\t1", 1)).unwrap();
    let e2 = ws.dir("e2");
    let mut args = explain.to_vec();
    args.extend(["--out", s(&e2)]);
    let err = expect_exit(&args, 3);
    assert!(err.contains("stale"), "{err}");
    fs::write(&images, text).unwrap();
    ok(&args);

    // editing the checkpoint
    let ckpt = model.join("checkpoint.json");
    let text = fs::read_to_string(&ckpt).unwrap();
    fs::write(&ckpt, text.replacen("0.", "1.", 1)).unwrap();
    let err = expect_exit(&args, 3);
    assert!(err.contains("checkpoint.json"), "{err}");
}

#[test]
fn runaway_learning_rate_exits_with_code_4() {
    let ws = Workspace::new(SMALL);
    ws.run("synth", "data", &[]);
    let err = expect_exit(
        &[
            "pretrain",
            "--config",
            s(&ws.config),
            "--data",
            s(&ws.dir("data")),
            "--lr",
            "1e300",
            "--out",
            s(&ws.dir("model")),
        ],
        4,
    );
    assert!(err.contains("numerical"), "{err}");
}

#[test]
fn explain_needs_enough_held_out_individuals() {
    let ws = Workspace::new(SMALL);
    let (data, model) = ws.upstream(&[]);
    let err = expect_exit(
        &[
            "explain",
            "--data",
            s(&data),
            "--model",
            s(&model),
            "--reference-batch-size",
            "48",
            "--out",
            s(&ws.dir("e")),
        ],
        3,
    );
    assert!(err.contains("reference batch"), "{err}");
}

#[test]
fn scheme_does_not_change_clumps_on_complete_data() {
    let config = format!("{SMALL}\n[synth.missingness]\nraw = 0.0\npgs = 0.0\nburden = 0.0\n");
    let ws = Workspace::new(&config);
    ws.run("synth", "data", &[]);
    let data = ws.dir("data");
    let mut clumps = Vec::new();
    let mut stats = Vec::new();
    for scheme in ["inner", "outer"] {
        let model = format!("model-{scheme}");
        ws.run("pretrain", &model, &["--data", s(&data), "--scheme", scheme]);
        let assoc = format!("assoc-{scheme}");
        ws.run("assoc", &assoc, &["--data", s(&data), "--model", s(&ws.dir(&model))]);
        clumps.push(without_header(&fs::read_to_string(ws.dir(&assoc).join("clumps.tsv")).unwrap()));
        stats.push(without_header(&fs::read_to_string(ws.dir(&assoc).join("summary_stats.tsv")).unwrap()));
    }
    assert!(clumps[0].lines().count() > 1, "no clumps to compare:\n{}", clumps[0]);
    assert_eq!(clumps[0], clumps[1]);
    assert_eq!(stats[0], stats[1]);
}

fn completeness(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("completeness.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(3).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn more_ig_steps_shrink_the_completeness_error() {
    let ws = Workspace::new(SMALL);
    let (data, model) = ws.upstream(&[]);
    for steps in ["32", "256"] {
        ws.run(
            "explain",
            &format!("ig{steps}"),
            &["--data", s(&data), "--model", s(&model), "--ig-steps", steps],
        );
    }
    let (coarse, fine) = (completeness(&ws.dir("ig32")), completeness(&ws.dir("ig256")));
    assert_eq!((coarse.len(), fine.len()), (8, 8));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&fine) < mean(&coarse), "mean error {} at 256 steps vs {} at 32", mean(&fine), mean(&coarse));
    let max = |d: &str| summary(&ws.dir(d))["metrics"]["completeness_max_abs_error"].as_f64().unwrap();
    assert!(max("ig256") < max("ig32"));
}

#[test]
fn every_stage_is_idempotent() {
    let a = Workspace::new(SMALL);
    let b = Workspace::new(SMALL);
    for ws in [&a, &b] {
        let (data, model) = ws.upstream(&[]);
        let m = ["--data", s(&data), "--model", s(&model)];
        ws.run("explain", "explain", &m);
        ws.run("assoc", "assoc", &m);
        ws.run("eval", "eval", &m);
        let (e, x, v) = (ws.dir("explain"), ws.dir("assoc"), ws.dir("eval"));
        ws.run("report", "report", &[s(&data), s(&model), s(&e), s(&x), s(&v)]);
    }
    for stage in ["data", "model", "explain", "assoc", "eval", "report"] {
        assert_eq!(files_under(&a.dir(stage)), files_under(&b.dir(stage)), "stage {stage}");
    }
    // a single worker gives the same bytes
    let (data, model) = (a.dir("data"), a.dir("model"));
    let m = ["--data", s(&data), "--model", s(&model)];
    let mut args = vec!["explain", "--config", s(&a.config), "--threads", "1"];
    args.extend_from_slice(&m);
    let one = a.dir("explain-1");
    args.extend(["--out", s(&one)]);
    ok(&args);
    assert_eq!(files_under(&one), files_under(&a.dir("explain")));
}

#[test]
fn stage_summaries_chain_fingerprints() {
    let ws = Workspace::new(SMALL);
    let (data, model) = ws.upstream(&[]);
    ws.run("eval", "eval", &["--data", s(&data), "--model", s(&model)]);
    let (d, m, e) = (summary(&data), summary(&model), summary(&ws.dir("eval")));
    assert_eq!(m["inputs"]["data"], e["inputs"]["data"]);
    assert_eq!(e["inputs"]["model"], m["fingerprint"]);
    assert_ne!(d["fingerprint"], m["fingerprint"]);
    let r2 = &e["metrics"]["linear_eval"]["latent0"]["pretrained"]["r2"];
    assert!(r2.as_f64().unwrap().is_finite());
    let tsv = fs::read_to_string(ws.dir("eval").join("linear_eval.tsv")).unwrap();
    assert!(tsv.contains("latent0\trandom_init"));

    ws.run("report", "report", &[s(&data), s(&model), s(&ws.dir("eval"))]);
    let md = fs::read_to_string(ws.dir("report").join("report.md")).unwrap();
    for stage in ["## synth", "## pretrain", "## eval"] {
        assert!(md.contains(stage), "{md}");
    }
}

#[test]
fn eval_reads_a_label_table() {
    let ws = Workspace::new(SMALL);
    let (data, model) = ws.upstream(&[]);
    let labels = ws.dir("labels.tsv");
    let mut text = String::from("#iid\tcase\n");
    for (i, line) in fs::read_to_string(data.join("covariates.tsv")).unwrap().lines().filter(|l| !l.starts_with('#')).enumerate() {
        let id = line.split('\t').next().unwrap();
        text.push_str(&format!("{id}\t{}\n", i % 2));
    }
    fs::write(&labels, text).unwrap();
    ws.run(
        "eval",
        "eval",
        &["--data", s(&data), "--model", s(&model), "--labels", s(&labels), "--task", "classification"],
    );
    let auc = summary(&ws.dir("eval"))["metrics"]["linear_eval"]["case"]["pretrained"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn default_pipeline_finishes_within_ten_minutes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    let start = Instant::now();
    ok(&["synth", "--out", s(&dir("data"))]);
    ok(&["pretrain", "--data", s(&dir("data")), "--out", s(&dir("model"))]);
    let (data, model) = (dir("data"), dir("model"));
    let m = ["--data", s(&data), "--model", s(&model)];
    for stage in ["explain", "assoc", "eval"] {
        let mut args = vec![stage];
        args.extend_from_slice(&m);
        let out = dir(stage);
        args.extend(["--out", s(&out)]);
        ok(&args);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(600), "{elapsed:?}");
    let recovery = &summary(&dir("assoc"))["metrics"]["planted_recovery"];
    assert!(recovery["recovered"].as_u64().unwrap() >= 2, "{recovery}");
}
