use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn incidence(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incidence"))
        .args(args)
        .current_dir(cwd)
        .env_remove("INCIDENCE_SEED")
        .env_remove("INCIDENCE_CONFIG")
        .env_remove("INCIDENCE_OUT")
        .env_remove("INCIDENCE_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) {
    let out = incidence(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn economy_solve_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("base.json"), r#"{"params": {"eps": 4.0, "rho": -0.5}}"#).unwrap();
    ok(&["economy", "solve", "--config", "base.json", "--out", "a"], tmp.path());
    ok(&["economy", "solve", "--config", "base.json", "--out", "b"], tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(read(&a, "equilibrium.json"), read(&b, "equilibrium.json"));
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    let m: Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    assert_eq!(m["command"], "economy solve");
    assert_eq!(m["config"]["params"]["eps"], 4.0);
    assert_eq!(m["config"]["params"]["s_L"], 0.5);
}

#[test]
fn panel_to_event_study_pipeline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("panel.json"), r#"{"workers": {"enabled": false}}"#).unwrap();
    ok(
        &[
            "panel",
            "generate",
            "--config",
            "panel.json",
            "--seed",
            "11",
            "--out",
            "p",
        ],
        dir,
    );
    ok(
        &[
            "panel",
            "generate",
            "--config",
            "panel.json",
            "--seed",
            "11",
            "--out",
            "q",
        ],
        dir,
    );
    assert_eq!(
        read(&dir.join("p"), "firm_panel.csv"),
        read(&dir.join("q"), "firm_panel.csv")
    );
    assert!(!dir.join("p/worker_panel.csv").exists());

    ok(
        &["estimate", "event-study", "--data", "p/firm_panel.csv", "--out", "es"],
        dir,
    );
    ok(
        &[
            "estimate",
            "event-study",
            "--data",
            "q/firm_panel.csv",
            "--out",
            "es2",
            "--workers",
            "1",
        ],
        dir,
    );
    let csv = String::from_utf8(read(&dir.join("es"), "event_study.csv")).unwrap();
    assert_eq!(
        csv,
        String::from_utf8(read(&dir.join("es2"), "event_study.csv")).unwrap()
    );
    let mut post = Vec::new();
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        if f[0] >= 0.0 {
            post.push(f[1]);
        }
    }
    assert_eq!(post.len(), 4);
    let mean = post.iter().sum::<f64>() / 4.0;
    assert!((0.06..=0.12).contains(&mean), "post mean {mean}");
    assert!(String::from_utf8(read(&dir.join("es"), "event_study.svg"))
        .unwrap()
        .starts_with("<svg"));

    ok(&["estimate", "did", "--data", "p/firm_panel.csv", "--out", "did"], dir);
    let did: Value = serde_json::from_slice(&read(&dir.join("did"), "did.json")).unwrap();
    let (beta, ratio) = (did["beta_iv"].as_f64().unwrap(), did["wald_ratio"].as_f64().unwrap());
    assert!((beta - ratio).abs() < 1e-10);

    // the manifest's resolved config reruns to the same report
    let m: Value = serde_json::from_slice(&read(&dir.join("did"), "manifest.json")).unwrap();
    fs::write(dir.join("rerun.json"), m["config"].to_string()).unwrap();
    ok(&["estimate", "did", "--config", "rerun.json", "--out", "did2"], dir);
    assert_eq!(read(&dir.join("did"), "did.json"), read(&dir.join("did2"), "did.json"));

    ok(
        &["report", "plot", "--input", "es/event_study.csv", "--out", "plot"],
        dir,
    );
    assert!(dir.join("plot/plot.svg").exists());
}

#[test]
fn environment_overrides_flags_defaults() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("panel.json"), r#"{"n_firms": 200}"#).unwrap();
    ok(
        &[
            "panel",
            "generate",
            "--config",
            "panel.json",
            "--seed",
            "5",
            "--out",
            "flag",
        ],
        dir,
    );
    let out = Command::new(env!("CARGO_BIN_EXE_incidence"))
        .args(["panel", "generate"])
        .current_dir(dir)
        .env("INCIDENCE_SEED", "5")
        .env("INCIDENCE_CONFIG", "panel.json")
        .env("INCIDENCE_OUT", "env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        read(&dir.join("flag"), "firm_panel.csv"),
        read(&dir.join("env"), "firm_panel.csv")
    );
    assert_eq!(
        read(&dir.join("flag"), "worker_panel.csv"),
        read(&dir.join("env"), "worker_panel.csv")
    );
}

#[test]
fn sweep_writes_one_line_per_eps() {
    let tmp = TempDir::new().unwrap();
    ok(&["cmd", "sweep", "--out", "s"], tmp.path());
    let csv = String::from_utf8(read(&tmp.path().join("s"), "sweep.csv")).unwrap();
    assert!(csv.starts_with("eps,eta,sigma_hat,"));
    assert_eq!(csv.lines().count(), 1 + 6 * 24);
    let svg = String::from_utf8(read(&tmp.path().join("s"), "sweep.svg")).unwrap();
    assert_eq!(svg.matches("eps = ").count(), 6);
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("unknown.json"), r#"{"params": {"epsilon": 2}}"#).unwrap();
    let out = incidence(&["economy", "solve", "--config", "unknown.json", "--out", "x"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.epsilon"));

    fs::write(dir.join("range.json"), r#"{"serial_corr_rho": 1.5}"#).unwrap();
    let out = incidence(&["panel", "generate", "--config", "range.json", "--out", "x"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("serial_corr_rho"));

    let out = incidence(&["cmd", "fit", "--out", "x"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("moments"));

    assert_eq!(incidence(&["economy", "bogus"], dir).status.code(), Some(1));
    assert!(!dir.join("x").exists(), "failed runs must not leave artifacts");
}

#[test]
fn estimation_failures_exit_2() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("panel.json"),
        r#"{"n_firms": 300, "workers": {"enabled": false}}"#,
    )
    .unwrap();
    ok(&["panel", "generate", "--config", "panel.json", "--out", "p"], dir);
    fs::write(
        dir.join("one.json"),
        r#"{"data": "p/firm_panel.csv", "design": {"subsample": {"column": "state", "equals": "1"}, "cluster": ["state"]}}"#,
    )
    .unwrap();
    let out = incidence(&["estimate", "did", "--config", "one.json", "--out", "x"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster"));
    assert!(!dir.join("x").exists());
}
