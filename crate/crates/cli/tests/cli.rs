use std::path::PathBuf;
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name).join("manifest.toml")
}

fn lvdes() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lvdes"))
}

#[test]
fn heuristic_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = lvdes()
        .arg(fixture("single_design"))
        .args(["--algorithm", "pa-h", "-o"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("converged-exhausted"), "{stdout}");
    assert!(stdout.contains("Objective value"), "{stdout}");
    for f in ["result.json", "ledger.jsonl", "run.log.jsonl", "trajectory.csv", "breakdown.txt", "violations.csv", "schedule.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(doc["variant"], "pa-h");
    assert_eq!(doc["status"], "converged-exhausted");
    let ledger = std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), doc["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn milp_schedule_audits_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    let run = lvdes()
        .arg(fixture("pv_heavy"))
        .args(["--algorithm", "milp-only", "-o"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let audit_dir = tempfile::tempdir().unwrap();
    let out = lvdes()
        .arg(fixture("pv_heavy"))
        .arg("--audit-only")
        .arg(dir.path().join("schedule.json"))
        .arg("-o")
        .arg(audit_dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(audit_dir.path().join("violations.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| r.contains("v_max")), "{csv}");
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let out = lvdes().arg("/nonexistent/manifest.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn bad_algorithm_is_rejected() {
    let out = lvdes().arg(fixture("feeder5")).args(["--algorithm", "greedy"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn time_limit_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = lvdes().arg(fixture("time_limit")).arg("-o").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}
