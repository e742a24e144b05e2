//! End-to-end checks of the command-line surface.

use std::fs;

use oscnn::cli::run;
use tempfile::TempDir;

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let full: Vec<String> = std::iter::once("oscnn".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    let code = run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn analyze_reports_the_prime_bound() {
    let (code, out) = run_cli(&["analyze", "--length", "40"]);
    assert_eq!(code, 0);
    let record: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(record["m"], 13);
    assert_eq!(record["n"], 40);
    assert_eq!(record["coverage_ok"], true);
    assert_eq!(record["target_rf"], 20);
    assert_eq!(
        record["kernel_lists"][0],
        serde_json::json!([1, 2, 3, 5, 7, 11, 13])
    );
    assert_eq!(record["kernel_lists"][2], serde_json::json!([1, 2]));
    assert!(record["total_weights"].as_u64().unwrap() > 0);
    assert!(record["comparison"]["prime_sum"].as_u64().unwrap() > 0);
}

#[test]
fn no_arguments_is_a_usage_error() {
    let (code, _) = run_cli(&[]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _) = run_cli(&["analyze", "--length", "40", "--no-such-flag"]);
    assert_eq!(code, 2);
}

#[test]
fn train_on_the_synthetic_fixture_writes_results() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("results.jsonl");
    let model_path = dir.path().join("model.json");
    let args = [
        "train",
        "--dataset",
        "synthetic",
        "--model",
        "os-cnn",
        "--seeds",
        "2",
        "--epochs",
        "60",
        "--stop-loss",
        "0.05",
        "--budget",
        "2000",
        "--out",
        out_path.to_str().unwrap(),
        "--save-model",
        model_path.to_str().unwrap(),
    ];
    let (code, stdout) = run_cli(&args);
    assert_eq!(code, 0, "stdout: {stdout}");
    let results = oscnn::experiment::read_results_jsonl(&out_path).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].seed_accuracies.len(), 2);
    assert_eq!(results[0].model, "os-cnn");
    assert!(results[0].mean_accuracy > 0.8);
    assert!(model_path.is_file());

    // Bit-exact reruns under a fixed seed list.
    let out2 = dir.path().join("again.jsonl");
    let mut args2: Vec<&str> = args[..args.len() - 4].to_vec();
    args2.extend(["--out", out2.to_str().unwrap()]);
    let (code, _) = run_cli(&args2);
    assert_eq!(code, 0);
    let rerun = oscnn::experiment::read_results_jsonl(&out2).unwrap();
    assert_eq!(rerun[0].seed_accuracies, results[0].seed_accuracies);
}

#[test]
fn train_rejects_an_unknown_dataset_with_module_error() {
    let dir = TempDir::new().unwrap();
    let (code, _) = run_cli(&[
        "train",
        "--dataset",
        "DoesNotExist",
        "--data-root",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn evaluate_emits_wins_ranks_and_cliques() {
    let dir = TempDir::new().unwrap();
    let matrix = dir.path().join("acc.csv");
    fs::write(
        &matrix,
        "dataset,OS,Base\n\
         d1,0.9,0.8\nd2,0.85,0.8\nd3,0.7,0.7\nd4,0.95,0.6\nd5,0.8,0.75\n",
    )
    .unwrap();
    let (code, out) = run_cli(&[
        "evaluate",
        "--matrix",
        matrix.to_str().unwrap(),
        "--target",
        "OS",
        "--pretty",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("\"target\": \"OS\""));
    assert!(out.contains("OS wins"));
    let json_part = &out[..out.find("Baseline").unwrap()];
    let report: serde_json::Value = serde_json::from_str(json_part.trim()).unwrap();
    assert_eq!(report["wins"][0]["target_wins"], 4);
    assert_eq!(report["wins"][0]["baseline_wins"], 0);
    assert_eq!(report["wins"][0]["ties"], 1);
}

#[test]
fn report_writes_sorted_relative_deltas() {
    let dir = TempDir::new().unwrap();
    let matrix = dir.path().join("acc.csv");
    fs::write(
        &matrix,
        "dataset,OS,A,B\nd1,0.9,0.8,0.95\nd2,0.7,0.75,0.7\n",
    )
    .unwrap();
    let out_dir = dir.path().join("reports");
    let (code, out) = run_cli(&[
        "report",
        "--matrix",
        matrix.to_str().unwrap(),
        "--candidate",
        "OS",
        "--baselines",
        "A,B",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["relative"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out_dir.join("relative_OS_vs_A.csv")).unwrap();
    assert!(csv.starts_with("dataset,delta"));
    // sorted ascending: d2 delta (-0.05) before d1 (+0.1)
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[1].starts_with("d2"));
}

#[test]
fn sweep_runs_baselines_and_the_reference_model() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("sweep.jsonl");
    let (code, out) = run_cli(&[
        "sweep",
        "--dataset",
        "synthetic",
        "--rf",
        "10,14",
        "--mode",
        "fixed-size",
        "--seeds",
        "1",
        "--epochs",
        "1",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    let results = oscnn::experiment::read_results_jsonl(&out_path).unwrap();
    assert_eq!(results.len(), 3, "two baselines plus the omni-scale entry");
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["entries"].as_array().unwrap().len(), 3);
}
