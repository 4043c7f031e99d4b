use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-risk"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--p", "8", "--ens", "1.5", "--link", "linear", "--noise", "gaussian", "--kind",
        "do-shift", "--n-int", "200", "--seed", "7", "--out-dir",
    ];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    run(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_four_reproducible_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simulate(a.path(), &["--p-iota", "0.5"]).status.success());
    assert!(simulate(b.path(), &["--p-iota", "0.5"]).status.success());
    for name in ["data.csv", "specs.json", "truth.adj", "sem.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name} empty");
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name} differs");
    }
    let sem = read_json(&a.path().join("sem.json"));
    assert_eq!(sem["command"]["seed"], 7);
}

#[test]
fn full_intervention_lists_every_node() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--p-iota", "1.0"]).status.success());
    let specs = read_json(&dir.path().join("specs.json"));
    let nodes: Vec<u64> = specs["interventions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["node"].as_u64().unwrap())
        .collect();
    assert_eq!(nodes, (1..=8).collect::<Vec<_>>());
}

#[test]
fn missing_seed_is_a_usage_error() {
    let out = run(&["simulate", "--p", "5", "--ens", "1.5", "--p-iota", "1", "--n-int", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert_eq!(run(&["grid"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn perfect_learner(dir: &Path) -> String {
    let path = dir.join("perfect.sh");
    let truth = dir.join("truth.adj");
    fs::write(&path, format!("#!/bin/sh\ncp '{}' \"$3\"\n", truth.display())).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    format!("external:{}", path.display())
}

#[test]
fn evaluate_scores_a_perfect_learner_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--p-iota", "1.0"]).status.success());
    let data = dir.path().join("data.csv");
    let truth = dir.path().join("truth.adj");
    let learner = perfect_learner(dir.path());
    let report = dir.path().join("report.json");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--learner",
        &learner,
        "--learner",
        "empty",
        "--learner",
        "acor",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    assert_eq!(r["learners"][0]["oracle_hat"], 0.0);
    assert_eq!(r["learners"][0]["naive"].as_f64(), r["learners"][0]["weighted"].as_f64());
    assert_eq!(r["learners"].as_array().unwrap().len(), 3);
    // Three learners, three pairwise differences.
    assert_eq!(r["differences"].as_array().unwrap().len(), 3);
    assert_eq!(r["iota"].as_array().unwrap().len(), 8);
}

#[test]
fn evaluate_refuses_a_single_intervention() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--iota", "3"]).status.success());
    let out = run(&["evaluate", "--data", dir.path().join("data.csv").to_str().unwrap(), "--learner", "empty"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least two"));
}

#[test]
fn evaluate_reports_learner_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--iota", "1,2,3"]).status.success());
    let broken = dir.path().join("broken.sh");
    fs::write(&broken, "#!/bin/sh\necho bad input >&2\nexit 4\n").unwrap();
    fs::set_permissions(&broken, fs::Permissions::from_mode(0o755)).unwrap();
    let out = run(&[
        "evaluate",
        "--data",
        dir.path().join("data.csv").to_str().unwrap(),
        "--learner",
        &format!("external:{}", broken.display()),
        "--learner",
        "empty",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["failures"][0]["error"].as_str().unwrap().contains("bad input"));
    assert_eq!(r["learners"].as_array().unwrap().len(), 1);
}

#[test]
fn grid_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        "[space]\np = [6]\nn_int = [50]\nlink = [\"linear\"]\nnoise = [\"gaussian\"]\n\
         [mode]\ntype = \"sample\"\nsettings = 6\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "grid",
        "--seed",
        "5",
        "--config",
        cfg.to_str().unwrap(),
        "--jobs",
        "2",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 2);
    assert!(fs::read_to_string(out_dir.join("report.svg")).unwrap().starts_with("<svg"));

    let again = dir.path().join("again");
    let out = run(&[
        "report",
        "--results",
        out_dir.join("results.csv").to_str().unwrap(),
        "--tolerance",
        "0.1",
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(&out_dir.join("cells.json"));
    let b = read_json(&again.join("cells.json"));
    assert_eq!(a["cells"], b["cells"]);
    assert_eq!(a["first"], "greedy-bic");
}

#[test]
fn report_on_empty_results_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    fs::write(&results, "").unwrap();
    let out = run(&["report", "--results", results.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cells = read_json(&dir.path().join("cells.json"));
    assert_eq!(cells["cells"].as_array().unwrap().len(), 0);
}

#[test]
fn malformed_grid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"space\": {\"p\": [25]},\n  \"replicates\": 3\n}\n").unwrap();
    let out = run(&["grid", "--seed", "1", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replicates") && err.contains("line 3"), "{err}");
}
