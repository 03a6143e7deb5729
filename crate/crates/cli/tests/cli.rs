use std::path::Path;
use std::process::{Command, Output};

fn diffnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffnoise")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn simulate(dir: &Path, lambda: &str) -> (String, String) {
    let path = dir.join(format!("obs-{lambda}.csv"));
    let out = diffnoise(&[
        "simulate", "--n", "20000", "--gamma", "0.7", "--lambda", lambda, "--seed", "5", "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (path.to_str().unwrap().to_string(), 20000f64.powf(-0.7).to_string())
}

#[test]
fn simulate_then_test() {
    let dir = tempfile::tempdir().unwrap();
    let (noisy, h) = simulate(dir.path(), "1e-4");
    let v = json(&diffnoise(&["test", &noisy, "--h", &h]));
    for key in ["z", "p_value", "level", "reject", "n", "p", "k", "tau"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["reject"], true);
    assert_eq!(v["tau"], 1.9);
    assert_eq!(v["n"], 20000);

    let v = json(&diffnoise(&["test", &noisy, "--h", &h, "--tau", "2.0", "--level", "0.001"]));
    assert_eq!(v["tau"], 2.0);
    assert_eq!(v["level"], 0.001);
}

#[test]
fn estimate_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let (obs, h) = simulate(dir.path(), "0");
    let boxes = dir.path().join("boxes.toml");
    std::fs::write(
        &boxes,
        "alpha_box = [{lower = 0.5, upper = 500.0}, {lower = -0.5, upper = 0.5}, {lower = 0.5, upper = 500.0}]\n",
    )
    .unwrap();
    let v = json(&diffnoise(&[
        "estimate",
        &obs,
        "--h",
        &h,
        "--config",
        boxes.to_str().unwrap(),
        "--lga",
        "--cov",
        "--columns",
        "y1,y2",
    ]));
    let alpha: Vec<f64> = serde_json::from_value(v["alpha_hat"].clone()).unwrap();
    assert!((alpha[0] - 1.0).abs() < 0.2, "{alpha:?}");
    assert_eq!(v["beta_hat"].as_array().unwrap().len(), 6);
    assert!(v["lga"]["alpha"].is_array());
    assert_eq!(v["cov"]["labels"][0], "lambda[1,1]");
}

#[test]
fn degenerate_data_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("a,b\n");
    for _ in 0..400 {
        text.push_str("1.5,2.5\n");
    }
    std::fs::write(&path, text).unwrap();
    let out = diffnoise(&["test", path.to_str().unwrap(), "--h", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn bad_input_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
    let out = diffnoise(&["test", path.to_str().unwrap(), "--h", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
    assert_eq!(diffnoise(&["test", "/nonexistent.csv", "--h", "0.01"]).status.code(), Some(1));
}

#[test]
fn study_writes_outputs_and_rebuilds_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(
        &config,
        "noise = [0.0, 1e-4]\nn = 3000\ngamma = 0.7\ntaus = [1.9]\nreplications = 3\nseed = 1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = diffnoise(&[
        "study",
        "--config",
        config.to_str().unwrap(),
        "--threads",
        "2",
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["report.json", "records.jsonl", "estimates.csv", "rejections.csv"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["threads"], 2);

    let rebuilt_dir = dir.path().join("rebuilt");
    let out = diffnoise(&[
        "study",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "7",
        "--threads",
        "2",
        "--from-records",
        out_dir.join("records.jsonl").to_str().unwrap(),
        "--out",
        rebuilt_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["estimates.csv", "rejections.csv"] {
        assert_eq!(
            std::fs::read_to_string(out_dir.join(file)).unwrap(),
            std::fs::read_to_string(rebuilt_dir.join(file)).unwrap()
        );
    }
}

#[test]
fn invalid_study_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(&config, "noise = [0.0]\nn = 3000\nreplications = 0\nseed = 1\ngamma = 0.7\n").unwrap();
    let out = diffnoise(&["study", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
