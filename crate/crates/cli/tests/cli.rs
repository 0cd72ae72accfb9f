use std::path::Path;
use std::process::{Command, Output};

fn rfcca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfcca")).args(args).output().expect("binary runs")
}

fn simulate(dir: &Path, n: &str, seed: &str) {
    let out = rfcca(&["simulate", "--scenario", "h1_noise", "--n", n, "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "40", "1");
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("x1,") && header.ends_with(",true_rho"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 41);
    assert!(text.contains("# seed: 1"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["z_columns"].as_array().unwrap().len(), 10);
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "150", "2");
    let (data, man, model) = (dir.path().join("data.csv"), dir.path().join("manifest.json"), dir.path().join("m.bin"));
    let out = rfcca(&["train", "--data", s(&data), "--manifest", s(&man), "--ntree", "15", "--seed", "3", "--out", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rfcca(&["predict", "--model", s(&model), "--data", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "row,rho,status");
    assert_eq!(rows.len(), 151);
    for line in &rows[1..] {
        let rho: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&rho));
    }
}

#[test]
fn wrong_covariate_width_names_expected() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "120", "4");
    let (data, man, model) = (dir.path().join("data.csv"), dir.path().join("manifest.json"), dir.path().join("m.bin"));
    assert!(rfcca(&["train", "--data", s(&data), "--manifest", s(&man), "--ntree", "5", "--out", s(&model)]).status.success());
    let out = rfcca(&["predict", "--model", s(&model), "--data", s(&data), "--z-cols", "z1,z2,z3"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("expects 10"), "{err}");
}

#[test]
fn global_test_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "120", "5");
    let (data, man) = (dir.path().join("data.csv"), dir.path().join("manifest.json"));
    let run = |threads: &str| {
        let out = rfcca(&[
            "--threads", threads, "test", "--data", s(&data), "--manifest", s(&man), "--ntree", "10", "--permutations", "6", "--seed", "7",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("1");
    assert_eq!(a, run("2"));
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let p = report["result"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(report["seed"], 7);
    assert_eq!(report["result"]["requested"], 6);
}

#[test]
fn vimp_lists_every_covariate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "150", "6");
    let (data, man) = (dir.path().join("data.csv"), dir.path().join("manifest.json"));
    let out = rfcca(&["vimp", "--data", s(&data), "--manifest", s(&man), "--ntree", "15", "--surrogate-ntree", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "column,importance,rank");
    assert_eq!(rows.len(), 11);
}

#[test]
fn exit_codes_by_category() {
    let dir = tempfile::tempdir().unwrap();
    // Bad flag value.
    assert_eq!(rfcca(&["simulate", "--scenario", "nope", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(rfcca(&["--threads", "0", "simulate", "--out", s(dir.path())]).status.code(), Some(2));
    // Unparseable cell.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,y1,z1\n1,2,3\n4,oops,6\n").unwrap();
    let out = rfcca(&["train", "--data", s(&bad), "--x-cols", "x1", "--y-cols", "y1", "--z-cols", "z1", "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data error"));
    // Missing column.
    let out = rfcca(&["train", "--data", s(&bad), "--x-cols", "x9", "--y-cols", "y1", "--z-cols", "z1", "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "120", "8");
    let (data, man) = (dir.path().join("data.csv"), dir.path().join("manifest.json"));
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "ntree = 5\nnodesize = 35\n").unwrap();
    let model = dir.path().join("m.bin");
    assert!(rfcca(&["train", "--data", s(&data), "--manifest", s(&man), "--config", s(&cfg), "--out", s(&model)]).status.success());
    std::fs::write(&cfg, "ntrees = 5\n").unwrap();
    let out = rfcca(&["train", "--data", s(&data), "--manifest", s(&man), "--config", s(&cfg), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
}
