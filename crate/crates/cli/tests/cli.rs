use std::path::Path;
use std::process::{Command, Output};

fn micluster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_micluster"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = micluster(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_impute_cluster_pool() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--model", "VII", "--mechanism", "mcar", "--tau", "0.2", "--out-dir", p(&sim), "--seed", "3"]);
    let incomplete = std::fs::read_to_string(sim.join("incomplete.csv")).unwrap();
    assert!(incomplete.starts_with("X1,X2,X3,X4,X5,X6,X7,X8\n"));
    assert!(incomplete.contains("NA"));
    assert_eq!(incomplete.lines().count(), 301);

    let imp = dir.path().join("imp");
    ok(&[
        "impute", "--input", p(&sim.join("incomplete.csv")), "--engine", "jm-gl", "--k", "3", "--m", "3",
        "--burn-in", "10", "--thin", "2", "--out-dir", p(&imp),
    ]);
    let diag = std::fs::read_to_string(imp.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("chain,iteration,quantity,component,variable,value\n"));

    let mut label_files = Vec::new();
    for m in 1..=3 {
        let input = imp.join(format!("imputation_{m}.csv"));
        let out = dir.path().join(format!("labels_{m}.csv"));
        ok(&["cluster", "--input", p(&input), "--method", "kmeans", "--clusters", "3", "--out", p(&out)]);
        label_files.push(out);
    }
    let pooled = dir.path().join("pooled.csv");
    let mut args = vec!["pool", "--k", "3", "--method", "kmeans", "--imputations", p(&imp), "--instability-rounds", "2", "--out", p(&pooled), "--labels"];
    args.extend(label_files.iter().map(|f| p(f)));
    let stdout = ok(&args);
    assert!(stdout.contains("consensus_objective,"));
    assert!(stdout.contains("total_instability,"));
    let labels = std::fs::read_to_string(&pooled).unwrap();
    assert_eq!(labels.lines().count(), 301);
}

#[test]
fn experiment_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "model_id = \"VII\"\nmechanism = \"mcar\"\ntau = 0.1\nengine = \"fcs_norm\"\nm = 2\nl = 3\nreplicates = 2\nseed = 5\nreport_single = true\n",
    )
    .unwrap();
    ok(&["experiment", "--config", p(&cfg)]);
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,engine,mechanism,tau,clusterer,k,ari,total_instability,status"
    );
    assert_eq!(lines.count(), 4);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("engine,count,median_ari,iqr_ari\nfcs_norm,2,"));
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "model_id = \"I\"\nengine = \"jm_gl\"\nunknown_key = 1\n").unwrap();
    assert_eq!(micluster(&["experiment", "--config", p(&cfg)]).status.code(), Some(2));

    let csv = dir.path().join("ragged.csv");
    std::fs::write(&csv, "a,b\n1,2\n3\n").unwrap();
    let out = micluster(&["cluster", "--input", p(&csv), "--out", p(&dir.path().join("l.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    assert_eq!(micluster(&["impute", "--engine", "magic"]).status.code(), Some(2));
}
