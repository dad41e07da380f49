use std::path::Path;
use std::process::{Command, Output};

fn volredf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volredf"))
        .args(args)
        .current_dir(dir)
        .env_remove("VOLREDF_OUT_DIR")
        .output()
        .expect("spawn volredf")
}

fn panel(dir: &Path, days: &str) -> String {
    let p = dir.join("panel.csv");
    let out = volredf(&["simulate", "--days", days, "--n", "390", "--fine-steps", "3900", "--seed", "11", "-o", p.to_str().unwrap()], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p.to_str().unwrap().to_string()
}

/// Drops the volatile metadata block before comparing JSON outputs.
fn stable_json(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("metadata");
    v
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = volredf(&["redf", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_io_code_and_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = volredf(&["spotvol", "-i", "does-not-exist.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
    assert_eq!(err["schema"], 1);
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "not_a_key = 3\n").unwrap();
    let out = volredf(&["--config", "bad.toml", "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn redf_quantiles_csv_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let p = panel(dir.path(), "2");
    let out = volredf(&["redf", "-i", &p, "--quantiles", "0.05:0.95:0.05", "-o", "-"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# volredf schema=1 command=redf"));
    assert_eq!(lines.next().unwrap(), "alpha,quantile");
    let q: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(q.len(), 19);
    assert!(q.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn spotvol_output_reads_back_into_redf() {
    let dir = tempfile::tempdir().unwrap();
    let p = panel(dir.path(), "2");
    assert!(volredf(&["spotvol", "-i", &p, "-o", "spot.csv"], dir.path()).status.success());
    let a = volredf(&["redf", "-i", &p, "--grid", "0.5,1,1.5", "-o", "-"], dir.path());
    let b = volredf(&["redf", "-i", "spot.csv", "--grid", "0.5,1,1.5", "-o", "-"], dir.path());
    let body = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert!(a.status.success() && b.status.success());
    assert_eq!(body(&a), body(&b));
}

#[test]
fn gof_known_reports_a_valid_p_value() {
    let dir = tempfile::tempdir().unwrap();
    let p = panel(dir.path(), "12");
    let out = volredf(&["gof", "-i", &p, "--null", "gamma", "-B", "19", "--seed", "3", "-o", "gof.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stable_json(&dir.path().join("gof.json"));
    let report = &v["result"]["report"];
    let pv = report["p_value"].as_f64().unwrap();
    assert!((1.0 / 20.0..=1.0).contains(&pv));
    assert_eq!(report["replicates"].as_array().unwrap().len(), 19);
    assert_eq!(report["provenance"], "fixed");
}

#[test]
fn reruns_are_identical_and_hash_tracks_settings() {
    let dir = tempfile::tempdir().unwrap();
    let p = panel(dir.path(), "12");
    for (name, jobs) in [("a.json", "1"), ("b.json", "3")] {
        let out = volredf(&["--jobs", jobs, "gof", "-i", &p, "--null", "gamma", "-B", "9", "--seed", "5", "-o", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = stable_json(&dir.path().join("a.json"));
    assert_eq!(a, stable_json(&dir.path().join("b.json")));
    assert!(volredf(&["gof", "-i", &p, "--null", "gamma", "-B", "9", "--seed", "6", "-o", "c.json"], dir.path()).status.success());
    let c = stable_json(&dir.path().join("c.json"));
    assert_ne!(a["config_hash"], c["config_hash"]);
}

#[test]
fn gig_null_needs_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let p = panel(dir.path(), "2");
    let out = volredf(&["gof", "-i", &p, "--null", "gig", "--bootstrap", "none"], dir.path());
    assert_eq!(out.status.code(), Some(5));
    let out = volredf(&["gof", "-i", &p, "--null", "gig", "--bootstrap", "none", "--gig", "2,1,0.5", "-o", "-"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_dir_receives_default_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = volredf(&["--out-dir", "run", "simulate", "--days", "1", "--n", "390", "--fine-steps", "3900"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("run/panel.csv").exists());
}

#[test]
fn experiment_rejects_zero_replications() {
    let dir = tempfile::tempdir().unwrap();
    let out = volredf(&["experiment", "--kind", "redf-accuracy", "--replications", "0"], dir.path());
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn small_redf_accuracy_experiment_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = volredf(
        &["--out-dir", ".", "experiment", "--kind", "redf-accuracy", "--replications", "2", "--days", "2", "--n", "390", "--fine-steps", "3900"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = stable_json(&dir.path().join("manifest.json"));
    assert_eq!(m["result"]["completed"], 2);
    let summary = std::fs::read_to_string(dir.path().join("redf_accuracy_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2 + 19);
}

#[test]
fn pretick_aligns_ticks() {
    let dir = tempfile::tempdir().unwrap();
    let ticks = "timestamp,price\n2024-01-02T09:30:00,100\n2024-01-02T12:00:00,101\n2024-01-02T15:59:59,100.5\n";
    std::fs::write(dir.path().join("ticks.csv"), ticks).unwrap();
    let out = volredf(&["pretick", "-i", "ticks.csv", "--grid-seconds", "60", "-o", "grid.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(grid.lines().filter(|l| !l.starts_with('#')).count(), 1 + 391);
    assert!(dir.path().join("grid.days.json").exists());
}
