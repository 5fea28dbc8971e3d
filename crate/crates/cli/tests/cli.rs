use std::process::Command;

fn hybeam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybeam"))
}

#[test]
fn list_presets_names_every_preset() {
    let out = hybeam().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig2", "fig4", "fig8", "kron"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn run_preset_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let status = hybeam()
        .args([
            "run",
            "--preset",
            "fig2",
            "--trials",
            "3",
            "--seed",
            "9",
            "--workers",
            "2",
            "--out",
        ])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = hybeam::harness::read_csv(&path).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows
        .iter()
        .all(|r| r.trials + r.failures == 3 && r.seed == 9));
}

#[test]
fn run_prints_to_stdout_without_out() {
    let out = hybeam()
        .args(["run", "--preset", "fig2", "--trials", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scenario,algorithm,scheme,n_rf,snr_db,trials,mse,"));
}

#[test]
fn unknown_preset_reports_json_error() {
    let out = hybeam().args(["run", "--preset", "nope"]).output().unwrap();
    assert!(!out.status.success());
    let line = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["error"], "UnknownPreset");
}

#[test]
fn validate_accepts_and_rejects_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    let config = hybeam::harness::preset("fig3").unwrap();
    std::fs::write(&good, config.to_toml_string().unwrap()).unwrap();
    let out = hybeam()
        .args(["validate", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success());

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        config
            .to_toml_string()
            .unwrap()
            .replace("trials = ", "trials = -"),
    )
    .unwrap();
    let out = hybeam()
        .args(["validate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "InvalidConfig");
}

#[test]
fn usage_errors_are_machine_readable() {
    let out = hybeam().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "Usage");
}
