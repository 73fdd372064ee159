//! End-to-end tests of the `div` binary.

use std::path::Path;
use std::process::{Command, Output};

fn div() -> Command {
    Command::new(env!("CARGO_BIN_EXE_div"))
}

fn write_training_csv(path: &Path, n: usize) {
    // small confounded linear DGP: X = Z + H + e, Y = X - 3H + e'
    let mut s = String::from("Z,X,Y\n");
    let mut state = 88172645463325252u64;
    let mut unif = move || {
        // xorshift, mapped to (-1, 1); plenty for test data
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    };
    for _ in 0..n {
        let z = unif() * 1.5;
        let h = unif();
        let x = z + h + 0.5 * unif();
        let y = x - 3.0 * h + 0.5 * unif();
        s.push_str(&format!("{z},{x},{y}\n"));
    }
    std::fs::write(path, s).unwrap();
}

fn fast_fit_args(input: &Path, out: &Path) -> Vec<String> {
    [
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--z",
        "Z",
        "--x",
        "X",
        "--y",
        "Y",
        "--epochs",
        "200",
        "--width",
        "8",
        "--layers",
        "2",
        "--noise-dim",
        "3",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run(args: &[String]) -> Output {
    div().args(args).output().unwrap()
}

#[test]
fn fit_writes_model_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_training_csv(&csv, 120);
    let model = dir.path().join("model.bin");
    let trace = dir.path().join("trace.csv");
    let mut args = fast_fit_args(&csv, &model);
    args.extend(["--trace".into(), trace.to_str().unwrap().to_string()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = trace_text.lines();
    assert_eq!(lines.next().unwrap(), "epoch,loss,s1,s2");
    // checkpoints every 100 steps over 200 steps
    assert_eq!(lines.count(), 2);
}

#[test]
fn fit_missing_column_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_training_csv(&csv, 60);
    let model = dir.path().join("model.bin");
    let mut args = fast_fit_args(&csv, &model);
    let zi = args.iter().position(|a| a == "--z").unwrap();
    args[zi + 1] = "q".into();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("'q'"), "{err}");
}

#[test]
fn fit_non_numeric_cell_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, "Z,X,Y\n1,2,3\n1,oops,3\n").unwrap();
    let model = dir.path().join("model.bin");
    let out = run(&fast_fit_args(&csv, &model));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("oops") && err.contains("row 3") && err.contains("'X'"), "{err}");
}

#[test]
fn fit_divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_training_csv(&csv, 120);
    let model = dir.path().join("model.bin");
    let mut args = fast_fit_args(&csv, &model);
    args.extend(["--lr".into(), "1e18".into()]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn identical_fits_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_training_csv(&csv, 120);
    let m1 = dir.path().join("m1.bin");
    let m2 = dir.path().join("m2.bin");
    assert!(run(&fast_fit_args(&csv, &m1)).status.success());
    assert!(run(&fast_fit_args(&csv, &m2)).status.success());
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
}

fn fitted_model(dir: &Path) -> std::path::PathBuf {
    let csv = dir.join("data.csv");
    write_training_csv(&csv, 120);
    let model = dir.join("model.bin");
    assert!(run(&fast_fit_args(&csv, &model)).status.success());
    model
}

#[test]
fn predict_sample_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_model(dir.path());
    let xin = dir.path().join("x.csv");
    std::fs::write(&xin, "X\n-1.0\n0.0\n1.0\n").unwrap();
    let out_csv = dir.path().join("pred.csv");
    let args: Vec<String> = [
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        xin.to_str().unwrap(),
        "--x",
        "X",
        "--mode",
        "sample",
        "--m",
        "10",
        "--seed",
        "1",
        "--out",
        out_csv.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert!(run(&args).status.success());
    let first = std::fs::read(&out_csv).unwrap();
    let text = String::from_utf8_lossy(&first).to_string();
    assert_eq!(text.lines().next().unwrap(), "row,sample_index,y0");
    assert_eq!(text.lines().count(), 31); // header + 3 rows x 10 draws

    // same seed, byte-identical output
    assert!(run(&args).status.success());
    assert_eq!(std::fs::read(&out_csv).unwrap(), first);
}

#[test]
fn predict_quantiles_are_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_model(dir.path());
    let xin = dir.path().join("x.csv");
    std::fs::write(&xin, "X\n0.0\n2.0\n").unwrap();
    let out_csv = dir.path().join("q.csv");
    let args: Vec<String> = [
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        xin.to_str().unwrap(),
        "--x",
        "X",
        "--mode",
        "quantile",
        "--alphas",
        "0.1,0.5,0.9",
        "--m",
        "500",
        "--seed",
        "3",
        "--out",
        out_csv.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert!(run(&args).status.success());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut by_row: std::collections::HashMap<String, Vec<f64>> = Default::default();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        by_row
            .entry(cells[0].to_string())
            .or_default()
            .push(cells[2].parse().unwrap());
    }
    assert_eq!(by_row.len(), 2);
    for (_, qs) in by_row {
        assert!(qs.windows(2).all(|w| w[0] <= w[1]), "{qs:?}");
    }
}

#[test]
fn predict_rejects_wrong_model_version_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("model.bin");
    std::fs::write(&bogus, b"DIVMODEL/9\n{}\n").unwrap();
    let xin = dir.path().join("x.csv");
    std::fs::write(&xin, "X\n0.0\n").unwrap();
    let out_csv = dir.path().join("pred.csv");
    let args: Vec<String> = [
        "predict",
        "--model",
        bogus.to_str().unwrap(),
        "--input",
        xin.to_str().unwrap(),
        "--x",
        "X",
        "--mode",
        "mean",
        "--out",
        out_csv.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_writes_metrics_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let args: Vec<String> = [
        "simulate",
        "--scenario",
        "cont_linear_contZ",
        "--n",
        "400",
        "--methods",
        "tsls,cf_linear",
        "--seeds",
        "1,2",
        "--out",
        out_dir.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let out = div().args(&args).env("DIV_THREADS", "1").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "scenario,method,seed,mse,qte_rmse,beta_error,note");
    // 2 methods x 2 seeds + 2 aggregate rows
    assert_eq!(lines.len(), 7);
    // mse populated, qte/beta empty on a continuous scenario
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert!(!cells[3].is_empty() && cells[4].is_empty() && cells[5].is_empty());

    let preds = std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next().unwrap(), "x,estimate,method,seed");
    assert_eq!(preds.lines().count(), 1 + 4 * 200); // 200-point grid per cell
}

#[test]
fn simulate_unknown_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<String> = [
        "simulate",
        "--scenario",
        "nonsense",
        "--methods",
        "tsls",
        "--seeds",
        "1",
        "--out",
        dir.path().join("sim").to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn benchmark_json_schema_and_forced_failure() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    // criterion 10 is cheap: closed-form baseline agreement
    let ok = div()
        .args([
            "benchmark",
            "--criteria",
            "10",
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let entry = &json.as_array().unwrap()[0];
    for field in ["criterion", "measured", "threshold", "pass"] {
        assert!(entry.get(field).is_some(), "missing {field}");
    }
    assert_eq!(entry["pass"], serde_json::Value::Bool(true));

    // impossible tolerance forces failure; exit 1 but report still written
    let fail = div()
        .args([
            "benchmark",
            "--criteria",
            "10",
            "--tolerance-scale",
            "0",
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json[0]["pass"], serde_json::Value::Bool(false));
}
