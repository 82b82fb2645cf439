use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_calmeasure"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const THREE: &str = "score,label\n0.2,0\n0.4,1\n0.7,1\n";

#[test]
fn measure_reports_value_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.csv", THREE);
    let out = run_in(dir.path(), &["measure", "--input", "s.csv"]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert!((v["result"]["c_emp"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(v["result"]["worst_interval"]["p1"], 0.2);
    assert_eq!(v["result"]["worst_interval"]["p2"], 0.7);
    assert_eq!(v["meta"]["tool"], "calmeasure");
    assert_eq!(v["meta"]["command"], "measure");
    assert_eq!(v["meta"]["seed"], 0xC0FFEE);
    assert_eq!(v["meta"]["flags"]["input"], "s.csv");
    assert!(v["meta"]["version"].is_string());
}

#[test]
fn calibrate_then_apply_gives_zero_measure() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "val.csv",
        "score,label\n0.1,0\n0.2,1\n0.3,0\n0.45,0\n0.5,1\n0.8,1\n0.8,0\n0.95,1\n",
    );
    let out = run_in(
        dir.path(),
        &[
            "calibrate",
            "--train",
            "val.csv",
            "--emit-link",
            "link.json",
        ],
    );
    assert!(out.status.success());
    let link: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("link.json")).unwrap()).unwrap();
    assert_eq!(link["interpolation"], "linear-clamped");

    let out = run_in(
        dir.path(),
        &[
            "apply",
            "--link",
            "link.json",
            "--input",
            "val.csv",
            "--emit-csv",
            "cal.csv",
        ],
    );
    assert!(out.status.success());
    assert_eq!(json_of(&out)["result"]["c_emp_after"], 0.0);
    let out = run_in(dir.path(), &["measure", "--input", "cal.csv"]);
    assert!(json_of(&out)["result"]["c_emp"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "bound",
            "--finite-output",
            "--d",
            "2",
            "--n",
            "100",
            "--pstar",
            "10",
        ],
    );
    let v = json_of(&out);
    assert!((v["result"]["value"].as_f64().unwrap() - 0.5407).abs() < 1e-4);

    let out = run_in(
        dir.path(),
        &[
            "bound",
            "--rademacher",
            "0.05",
            "--n",
            "10000",
            "--delta",
            "0.05",
        ],
    );
    let v = json_of(&out);
    assert!((v["result"]["value"].as_f64().unwrap() - 0.163_719).abs() < 1e-5);

    let out = run_in(dir.path(), &["bound", "--finite-output", "--d", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "validation");
}

#[test]
fn invalid_rows_fail_without_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "score,label\n0.2,0\n0.3,x\n");
    let out = run_in(
        dir.path(),
        &["measure", "--input", "bad.csv", "--output", "r.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    let v = json_of(&out);
    assert!(v["error"]["message"].as_str().unwrap().contains("line 3"));
    assert!(!dir.path().join("r.json").exists());
    // no temporary files left behind either
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

    write(dir.path(), "mixed.csv", "score,label\n0.2,0\n0.3,-1\n");
    let out = run_in(dir.path(), &["measure", "--input", "mixed.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["measure", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "io");
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("score,label\n");
    for i in 0..300 {
        text.push_str(&format!(
            "{},{}\n",
            f64::from(i % 17) / 16.0,
            (i * 7 + 3) % 5 / 3
        ));
    }
    write(dir.path(), "s.csv", &text);
    let mut reports = Vec::new();
    for _ in 0..2 {
        let out = run_in(
            dir.path(),
            &[
                "rademacher",
                "--input",
                "s.csv",
                "--num-sigma",
                "500",
                "--delta",
                "0.05",
                "--output",
                "a.json",
            ],
        );
        assert!(out.status.success());
        reports.push(fs::read(dir.path().join("a.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["result"]["num_sigma"], 500);
    assert!(v["result"]["epsilon"].as_f64().unwrap() > 0.0);

    let out = run_in(
        dir.path(),
        &[
            "rademacher",
            "--input",
            "s.csv",
            "--seed",
            "7",
            "--output",
            "c.json",
        ],
    );
    assert!(out.status.success());
    let c: Value = serde_json::from_slice(&fs::read(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(c["meta"]["seed"], 7);
}

#[test]
fn simulate_train_and_loss_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate-lda",
            "--corpus",
            "corpus.txt",
            "--num-docs",
            "300",
            "--num-topics",
            "4",
            "--vocab-size",
            "60",
            "--avg-doc-len",
            "30",
            "--labels-per-doc",
            "3",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_of(&out);
    assert_eq!(v["result"]["config"]["num_docs"], 300);

    let out = run_in(
        dir.path(),
        &[
            "train",
            "--corpus",
            "corpus.txt",
            "--epochs",
            "50",
            "--emit-model",
            "model.json",
            "--emit-scores",
            "scores.csv",
            "--emit-csv",
            "history.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_of(&out);
    assert_eq!(v["result"]["dimension"], 60);
    assert!(v["result"]["l1"].as_f64().unwrap() < 0.5);
    let model: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["kind"], "logistic");
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 52);

    let out = run_in(
        dir.path(),
        &[
            "loss-ratio",
            "--validation",
            "scores.csv",
            "--test",
            "scores.csv",
            "--emit-csv",
            "ratios.csv",
        ],
    );
    assert!(out.status.success());
    let v = json_of(&out);
    for r in v["result"]["ratios"].as_array().unwrap() {
        assert!(r["loss_after"].as_f64().unwrap() <= r["loss_before"].as_f64().unwrap() + 1e-12);
    }
    let ratios = fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    assert!(ratios.starts_with("p,loss_before,loss_after,ratio\n"));

    let out = run_in(
        dir.path(),
        &[
            "decide",
            "--input",
            "scores.csv",
            "--fp-cost",
            "1",
            "--fn-cost",
            "3",
        ],
    );
    assert_eq!(json_of(&out)["result"]["threshold"], 0.25);
}

#[test]
fn train_naive_bayes_on_sparse_lines() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "d.txt",
        "1 0:2 1:1\n-1 1:3\n1 0:1\n-1 1:1 2:1\n",
    );
    let out = run_in(
        dir.path(),
        &[
            "train",
            "--sparse",
            "d.txt",
            "--model",
            "naive-bayes",
            "--emit-model",
            "nb.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_of(&out);
    assert_eq!(v["result"]["dimension"], 3);
    assert_eq!(v["result"]["model"], "naive-bayes");
    let model: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("nb.json")).unwrap()).unwrap();
    assert_eq!(model["kind"], "naive_bayes");
}

#[test]
fn rescale_raw_margins() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "raw.csv", "score,label\n-2,0\n0,1\n2,1\n");
    let out = run_in(
        dir.path(),
        &["rescale", "--input", "raw.csv", "--emit-csv", "unit.csv"],
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("unit.csv")).unwrap(),
        "score,label\n0.0,0\n0.5,1\n1.0,1\n"
    );
    write(dir.path(), "flat.csv", "score,label\n5,0\n5,1\n");
    let out = run_in(dir.path(), &["rescale", "--input", "flat.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn small_table1_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "reproduce-table1",
            "--num-docs",
            "400",
            "--emit-csv",
            "t.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_of(&out);
    assert_eq!(v["result"]["reference"]["label_frequency"], 0.3448);
    let lf = v["result"]["label_frequency"].as_f64().unwrap();
    assert!((0.2..0.5).contains(&lf));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
