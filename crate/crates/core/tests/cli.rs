use std::path::Path;
use std::process::Command;

fn scmil(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scmil")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &str) {
    let cfg = dir.join("sim.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"n_patients": 12, "patches_per_bag": [10, 20], "d": 8{extra}}}"#),
    )
    .unwrap();
    let out = scmil(&["simulate", "--config", path(&cfg), "--out", path(&dir.join("cohort"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "");
    let manifest = d.join("cohort/manifest.csv");
    let run_cfg = d.join("run.json");
    std::fs::write(&run_cfg, r#"{"epochs": 1, "heads": 2, "components": 6, "cluster_size": 8}"#).unwrap();

    let out = scmil(&[
        "train", "--manifest", path(&manifest), "--config", path(&run_cfg), "--fold", "1", "--out", path(&d.join("run")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["folds"].as_array().unwrap().len(), 1);
    let ckpt = d.join("run/fold1/model.scmc");
    assert!(ckpt.exists());

    let out = scmil(&[
        "evaluate", "--checkpoint", path(&ckpt), "--manifest", path(&manifest), "--out", path(&d.join("eval.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    for key in ["tdc", "ibs", "tau", "n_comparable_pairs", "grid_size"] {
        assert!(report.get(key).is_some(), "{key}");
    }

    let bag = d.join("cohort/P0003.scmb");
    let out = scmil(&[
        "predict", "--checkpoint", path(&ckpt), "--bag", path(&bag), "--grid", "25",
        "--out", path(&d.join("curve.csv")), "--svg", path(&d.join("bag.svg")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time,scdf,dpdf");
    assert_eq!(csv.lines().count(), 26);
    assert!(std::fs::read_to_string(d.join("bag.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "");
    let run_cfg = d.join("run.json");
    std::fs::write(&run_cfg, r#"{"epochs": 1, "heads": 2, "components": 4, "cluster_size": 8}"#).unwrap();
    let out = scmil(&[
        "sweep-w1", "--manifest", path(&d.join("cohort/manifest.csv")), "--config", path(&run_cfg),
        "--values", "0,0.8", "--out", path(&d.join("sweep.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "w1,mean_tdc,std_tdc,mean_ibs,std_ibs");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0.8,"));
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "patient_id,duration,event,bag_path\nP1,-3,1,missing.scmb\n").unwrap();
    let out = scmil(&["train", "--manifest", path(&manifest), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"));

    let out = scmil(&["train", "--manifest", path(&manifest), "--fold", "7", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undefined_metric_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Nobody dies, so no pair is comparable and τ is undefined.
    simulate(d, r#", "censor_rate": 1.0"#);
    let manifest = d.join("cohort/manifest.csv");
    let run_cfg = d.join("run.json");
    std::fs::write(&run_cfg, r#"{"epochs": 0, "heads": 2, "components": 4}"#).unwrap();
    let out = scmil(&[
        "train", "--manifest", path(&manifest), "--config", path(&run_cfg), "--fold", "0", "--out", path(&d.join("run")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
