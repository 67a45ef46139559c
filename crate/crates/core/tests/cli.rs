//! End-to-end CLI tests: exit codes, artifact determinism and the
//! synth -> train -> recommend/eval flow.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tabsem"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("spawn tabsem");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).to_string(),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

#[test]
fn exit_codes() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("synth"));

    // Unknown subcommand is a usage error.
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 1);
    // Missing required argument is a usage error.
    let (code, _, _) = run(&["synth"]);
    assert_eq!(code, 1);
    // A missing input file is a data error.
    let (code, _, stderr) = run(&[
        "featurize",
        "--tables",
        "/nonexistent/tables.jsonl",
        "--out",
        "/tmp/never.jsonl",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("error"));
}

#[test]
fn synth_is_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let (code, _, _) = run(&[
            "synth",
            "--n",
            "40",
            "--seed",
            "7",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let ta = std::fs::read(a.join("tables.jsonl")).unwrap();
    let tb = std::fs::read(b.join("tables.jsonl")).unwrap();
    assert_eq!(ta, tb);
    let ra = std::fs::read(a.join("records.jsonl")).unwrap();
    let rb = std::fs::read(b.join("records.jsonl")).unwrap();
    assert_eq!(ra, rb);
}

fn write_tiny_config(path: &Path) {
    std::fs::write(
        path,
        r#"{"encoder_dim": 16, "layers": 1, "heads": 2, "embed_dim": 16, "max_epochs": 4, "patience": 2}"#,
    )
    .unwrap();
}

#[test]
fn train_eval_recommend_flow() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let (code, _, _) = run(&[
        "synth",
        "--n",
        "100",
        "--seed",
        "7",
        "--out-dir",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let config = dir.path().join("config.json");
    write_tiny_config(&config);
    let model = dir.path().join("model.json");
    let (code, _, stderr) = run(&[
        "train",
        "--tables",
        corpus.join("tables.jsonl").to_str().unwrap(),
        "--records",
        corpus.join("records.jsonl").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "7",
        "--model-config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    let metrics = dir.path().join("metrics.json");
    let (code, _, stderr) = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--tables",
        corpus.join("tables.jsonl").to_str().unwrap(),
        "--records",
        corpus.join("records.jsonl").to_str().unwrap(),
        "--split",
        "test",
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    // 100 tables split 7:1:2.
    assert_eq!(metrics["run"]["split_sizes"]["train"], 70);
    assert_eq!(metrics["run"]["split_sizes"]["val"], 10);
    assert_eq!(metrics["run"]["split_sizes"]["test"], 20);
    assert!(metrics["cf"]["overall_r1"].is_number());

    // Labels and features export.
    let labels = dir.path().join("labels.jsonl");
    let (code, _, _) = run(&[
        "label",
        "--tables",
        corpus.join("tables.jsonl").to_str().unwrap(),
        "--records",
        corpus.join("records.jsonl").to_str().unwrap(),
        "--out",
        labels.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&labels).unwrap();
    assert!(text.contains("cf_label"));

    let features = dir.path().join("features.jsonl");
    let (code, _, _) = run(&[
        "featurize",
        "--tables",
        corpus.join("tables.jsonl").to_str().unwrap(),
        "--out",
        features.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&features)
        .unwrap()
        .contains("field_signature"));
}

#[test]
fn recommend_explains_error_cells() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    // A corpus of error-detection patterns trains a model whose top pick on
    // an error-laden field is IsError.
    let (code, _, _) = run(&[
        "synth",
        "--n",
        "60",
        "--seed",
        "13",
        "--mix",
        "IsError=1.0",
        "--out-dir",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let config = dir.path().join("config.json");
    write_tiny_config(&config);
    let model = dir.path().join("model.json");
    let (code, _, stderr) = run(&[
        "train",
        "--tables",
        corpus.join("tables.jsonl").to_str().unwrap(),
        "--records",
        corpus.join("records.jsonl").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "13",
        "--model-config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    let csv = dir.path().join("t.csv");
    std::fs::write(
        &csv,
        "lookup_result\n18\n#REF!\n54\n71\n#REF!\n12\n99\n40\n63\n75\n",
    )
    .unwrap();
    let (code, stdout, stderr) = run(&[
        "recommend",
        "--model",
        model.to_str().unwrap(),
        "--table",
        csv.to_str().unwrap(),
        "--field",
        "0",
        "--k",
        "1",
        "--explain",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
    assert!(
        lines.len() >= 2,
        "expected header plus one recommendation: {stdout}"
    );
    let top: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(top["operation"], "IsError");
    let explanation = top["explanation"].as_str().unwrap().to_lowercase();
    assert!(explanation.contains("error"), "{explanation}");

    // Without --explain the field is absent.
    let (code, stdout, _) = run(&[
        "recommend",
        "--model",
        model.to_str().unwrap(),
        "--table",
        csv.to_str().unwrap(),
        "--field",
        "0",
        "--k",
        "1",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
    let top: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert!(top.get("explanation").is_none());
}
