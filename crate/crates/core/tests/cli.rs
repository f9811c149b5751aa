use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let file = dir.join("config.json");
    std::fs::write(&file, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cmc-foliate"))
        .arg(&file)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn sweep_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), r#"{"n": 2, "mass_sigma": 1.0, "mode": "sweep", "r_end": 0.06, "lmax": 8}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let leaves = std::fs::read_to_string(tmp.path().join("out/leaves.csv")).unwrap();
    let mut lines = leaves.lines();
    assert!(lines.next().unwrap().starts_with("r,tau_1,tau_2,tau_3,"));
    assert_eq!(lines.count(), 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report.is_object());
    assert!(tmp.path().join("out/plotdata/leaf_000.csv").exists());
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in [
        r#"{"n": 2, "mode": "sweep"}"#,
        r#"{"n": 2, "mass_sigma": 0.0, "mode": "sweep"}"#,
        r#"{"n": 2, "mass_sigma": 1.0, "mode": "verify"}"#,
        r#"{"n": 2, "mass_sigma": 1.0, "mode": "sweep", "ratio": 0.99}"#,
        r#"{"n": 2, "mass_sigma": 1.0, "mode": "sweep", "colour": 1}"#,
        "not json",
    ] {
        let out = run(tmp.path(), bad, &[]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn out_of_range_leaves_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), r#"{"n": 2, "mass_sigma": 1.0, "mode": "sweep", "r_start": 0.2, "r_end": 0.1, "lmax": 8}"#, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_check_needs_no_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), r#"{"n": 2, "mass_sigma": 0.0}"#, &["--mode", "oracle-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/oracle.json").exists());
}
