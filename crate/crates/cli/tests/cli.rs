use std::process::Command;

fn thz_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thz-sim"))
}

#[test]
fn sweep_writes_tables_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = thz_sim()
        .args([
            "sweep",
            "--schemes",
            "FullyDigital,AlterOptFC",
            "--axis",
            "snr_db",
            "--values",
            "-5,10",
            "--trials",
            "2",
            "--seed",
            "3",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);
    for name in ["timing.csv", "summary.csv", "run.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["seeds"], serde_json::json!([3, 4]));
}

#[test]
fn config_file_sets_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "N_t = 8\nK = 2\n").unwrap();
    let out = dir.path().join("run");
    let status = thz_sim()
        .args(["sweep", "--schemes", "FullyDigital", "--values", "10", "--trials", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let meta = std::fs::read_to_string(out.join("run.json")).unwrap();
    assert!(meta.contains("\"N_t\": 8"), "{meta}");
}

#[test]
fn gainmap_has_header_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gain.csv");
    let status = thz_sim().args(["gainmap", "--values", "-10,0,10"]).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "angle_deg,subcarrier_index,frequency_hz,gain");
    assert_eq!(text.lines().count(), 1 + 3 * 128);
}

#[test]
fn validate_reports_clean_run() {
    let output = thz_sim().args(["validate", "--ops", "50", "--seed", "2"]).output().unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["operations"], 50);
    assert_eq!(report["violations"], 0);
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let output = thz_sim().args(["sweep", "--axis", "frequency"]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("frequency"));
}
