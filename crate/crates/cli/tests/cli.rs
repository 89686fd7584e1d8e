//! End-to-end runs of the `hybridcnn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hybridcnn"));
    c.env_remove("HCNN_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hybridcnn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn inspect_reports_reference_totals() {
    let o = run(&["inspect", "--expect-trainable", "15605124"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Total params: 15,611,524"));
    assert!(out.contains("Trainable params: 15,605,124"));
    assert!(out.contains("Non-trainable params: 6,400"));
    assert!(out.contains("Layer (type)") && out.contains("Output Shape") && out.contains("Param #"));
    assert!(out.contains("(None, 73, 73, 128)"));
}

#[test]
fn inspect_expectation_mismatch_exits_one() {
    let o = run(&["inspect", "--expect-trainable", "15605123"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("15605124"));
}

#[test]
fn inspect_names_the_first_failing_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(workspace_file("configs/custom_224.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["model"]["layers"][0]["stride"] = 1.into();
    let path = tmp.path().join("stride1.json");
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let o = run(&["inspect", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("max_pooling2d"), "{}", stderr(&o));
}

#[test]
fn inspect_reads_the_desk_hybrid() {
    let o = run(&["inspect", "--json", "--config", s(&workspace_file("configs/desk_hybrid.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["output_shape"], serde_json::json!([4]));
    assert!(v["trainable"].as_u64().unwrap() > 0);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let o = run(&["prepare", "--synthetic", "--out", "x", "--train-frac", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["predict", "--checkpoint", s(&tmp.path().join("nope.ckpt")), "img.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ["all.jsonl", "train.jsonl", "test.jsonl", "validation.jsonl", "summary.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn prepare_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let o = run(&[
            "prepare", "--synthetic", "--per-class", "12", "--size", "24", "--augment", "balanced", "--seed", seed,
            "--out", s(dir),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(read_outputs(&a), read_outputs(&b));
    assert_ne!(read_outputs(&a), read_outputs(&c));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    // 12 per class, 8 to train, cyst and tumor tripled
    assert_eq!(summary["train_before"]["Cyst"], 8);
    assert_eq!(summary["train_after"]["Cyst"], 24);
    assert_eq!(summary["train_after"]["Tumor"], 24);
    assert_eq!(summary["test"]["Stone"].as_u64().unwrap() + summary["validation"]["Stone"].as_u64().unwrap(), 4);
    assert!(a.join("run_config.json").exists());
    // augmented files are PNGs under the output directory
    let train = fs::read_to_string(a.join("train.jsonl")).unwrap();
    assert!(train.contains("augmented/"));
}

#[test]
fn prepare_without_augmentation_keeps_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["prepare", "--synthetic", "--per-class", "10", "--size", "16", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["train_before"], summary["train_after"]);
}

#[test]
fn unknown_class_directory_is_listed() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["Normal", "Stone", "Kidney"] {
        fs::create_dir_all(tmp.path().join("tree").join(d)).unwrap();
    }
    let o = run(&["prepare", "--data-dir", s(&tmp.path().join("tree")), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Kidney"), "{}", stderr(&o));
}

#[test]
fn bad_label_in_manifest_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.jsonl");
    fs::write(&m, "{\"path\":\"a.png\",\"label\":\"Cyst\"}\n{\"path\":\"b.png\",\"label\":\"Kidney\"}\n").unwrap();
    let o = run(&["prepare", "--manifest", s(&m), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("m.jsonl:2:") && err.contains("Kidney"), "{err}");
}

#[test]
fn train_eval_predict_pca_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = run(&["prepare", "--synthetic", "--per-class", "12", "--seed", "2", "--out", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let run_dir = tmp.path().join("run");
    let o = run(&[
        "train", "--manifest", s(&data.join("train.jsonl")), "--validation", s(&data.join("validation.jsonl")),
        "--epochs", "1", "--branch-epochs", "1", "--batch", "16", "--out", s(&run_dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["branch_ns.ckpt", "branch_ct.ckpt", "hybrid.ckpt", "train_log.jsonl", "run_config.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let config: serde_json::Value = serde_json::from_slice(&fs::read(run_dir.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "train");
    assert_eq!(config["args"]["lr"], 0.001);
    let ckpt = run_dir.join("hybrid.ckpt");

    let eval_dir = tmp.path().join("eval");
    let o = run(&["eval", "--checkpoint", s(&ckpt), "--manifest", s(&data.join("test.jsonl")), "--out", s(&eval_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(eval_dir.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 12);
    let csv = fs::read_to_string(eval_dir.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let image = fs::read_dir(data.join("images/Tumor")).unwrap().next().unwrap().unwrap().path();
    let o = run(&["predict", "--checkpoint", s(&ckpt), s(&image)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let probs: Vec<f64> = p["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(probs.len(), 4);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    assert!(["Normal", "Stone", "Cyst", "Tumor"].contains(&p["label"].as_str().unwrap()));

    let pca_dir = tmp.path().join("pca");
    let o = run(&["pca", "--checkpoint", s(&ckpt), "--manifest", s(&data.join("test.jsonl")), "--out", s(&pca_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(pca_dir.join("pca.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,label"));
    assert_eq!(csv.lines().count(), 13);

    // identical inputs give identical outputs
    let again = tmp.path().join("pca2");
    run(&["pca", "--checkpoint", s(&ckpt), "--manifest", s(&data.join("test.jsonl")), "--out", s(&again)]);
    assert_eq!(csv, fs::read_to_string(again.join("pca.csv")).unwrap());

    // a checkpoint from a newer format is refused with both versions
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[4..8].copy_from_slice(&3u32.to_le_bytes());
    let future = tmp.path().join("future.ckpt");
    fs::write(&future, bytes).unwrap();
    let o = run(&["predict", "--checkpoint", s(&future), s(&image)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("version 3") && err.contains("version 1"), "{err}");
}
