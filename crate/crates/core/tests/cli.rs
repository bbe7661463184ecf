use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn netinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netinfer"))
        .args(args)
        .env("NETINFER_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn tiny(task: &str, out: &Path) -> String {
    format!(
        r#"{{"task":"{task}","graph":{{"n":6,"k":2,"p_rewire":0.2,"seed":1}},
           "dynamics":{{"kind":"voter"}},
           "dataset":{{"count":8,"steps":6,"record_length":1,"seed":2}},
           "missing":{{"count":1,"seed":3}},
           "train":{{"epochs":2,"batch_size":16,"edge_sizes":[8],"node_hidden":6,"test_state_rounds":2}},
           "output_dir":{out:?}}}"#
    )
}

#[test]
fn simulate_voter_reports_ten_thousand_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        "v.json",
        &format!(
            r#"{{"task":"reconstruct","graph":{{"n":10,"k":4,"p_rewire":0.2,"seed":1}},
               "dynamics":{{"kind":"voter"}},
               "dataset":{{"count":200,"steps":50,"record_length":1,"seed":2}},
               "output_dir":{out:?}}}"#
        ),
    );
    let o = netinfer(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("10000 samples"), "{s}");
    assert!(s.contains("train 7000, val 1500, test 1500"), "{s}");
    assert!(out.join("dataset/meta.json").exists());
}

#[test]
fn simulate_single_cml_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"task":"reconstruct","graph":{{"n":10,"k":4,"p_rewire":0.2,"seed":1}},
               "dynamics":{{"kind":"cml"}},
               "dataset":{{"count":1,"steps":10,"record_length":10,"seed":2}},
               "train":{{"horizon":1}},
               "output_dir":{out:?}}}"#
        ),
    );
    let o = netinfer(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 samples (train 1, val 0, test 0)"), "{}", stdout(&o));
}

#[test]
fn config_errors_exit_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"dynamics":{"kind":"voter"}}"#);
    let o = netinfer(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "ok.json", &tiny("reconstruct", &dir.path().join("r")));
    let o = netinfer(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "graph.k=3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = netinfer(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "train.epochz=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochz"), "{}", stderr(&o));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = netinfer(&["train", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = write_config(dir.path(), "t.json", &tiny("reconstruct", &dir.path().join("r")));
    let o = netinfer(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn train_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = write_config(dir.path(), "t.json", &tiny("reconstruct", &out));
    let c = cfg.to_str().unwrap();
    assert!(netinfer(&["simulate", "--config", c]).status.success());
    let o = netinfer(&["train", "--config", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(out.join("history.csv")).unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["auc"].is_number());
    assert_eq!(metrics["run_id"].as_str().unwrap().len(), 16);
    assert_eq!(metrics["config"]["graph"]["n"], 6);
    for f in ["config.json", "checkpoints"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(netinfer(&["train", "--config", c]).status.success());
    assert_eq!(first, fs::read(out.join("history.csv")).unwrap());
}

#[test]
fn completion_run_reports_missing_auc() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let cfg = write_config(dir.path(), "c.json", &tiny("complete", &out));
    let c = cfg.to_str().unwrap();
    assert!(netinfer(&["simulate", "--config", c]).status.success());
    let o = netinfer(&["train", "--config", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics.get("missing_auc").is_some());
    assert!(out.join("partition.json").exists());
}

#[test]
fn sweep_writes_one_row_per_fraction_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let cfg = write_config(dir.path(), "s.json", &tiny("complete", &out));
    let o = netinfer(&[
        "sweep-missing",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "1",
        "--set",
        "train.epochs=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "missing_fraction,missing_auc,seed");
    assert_eq!(lines.len(), 8, "{csv}");
}

#[test]
fn report_groups_runs_and_tolerates_bad_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let o = netinfer(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(dir.path().join("report.json").exists());

    let (r, c) = (dir.path().join("r"), dir.path().join("c"));
    for (task, out) in [("reconstruct", &r), ("complete", &c)] {
        let cfg = write_config(dir.path(), &format!("{task}.json"), &tiny(task, out));
        let p = cfg.to_str().unwrap();
        assert!(netinfer(&["simulate", "--config", p]).status.success());
        assert!(netinfer(&["train", "--config", p, "--set", "train.epochs=1"]).status.success());
    }
    let bogus = dir.path().join("bogus");
    let o = netinfer(&[
        "report",
        "--out",
        dir.path().to_str().unwrap(),
        r.to_str().unwrap(),
        c.to_str().unwrap(),
        bogus.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("# reconstruct") && s.contains("# complete"), "{s}");
    assert!(s.contains("# skipped"), "{s}");
}
