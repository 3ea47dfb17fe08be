use std::path::PathBuf;
use std::process::{Command, Output};

use layered_num::trace::{parse_csv, RecordKind};
use layered_num::RunSummary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layered-num"))
}

fn default_scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper-fig2.json")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = bin()
        .arg("run")
        .arg(default_scenario())
        .arg("--out")
        .arg(&trace)
        .output()
        .unwrap();
    ok(&out);
    let digest = String::from_utf8(out.stdout).unwrap();
    assert!(
        digest.contains("admission at iteration 300: admitted [1, 2, 3, 4, 5, 6, 7], dismissed [0]"),
        "{digest}"
    );

    let rows = parse_csv(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.kind == RecordKind::Link).count(), 800 * 7);

    let summary: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary.admissions[0].dismissed, vec![0]);
    assert_eq!(summary.iterations, 800);
    // summary numbers agree with a recomputation from the trace file
    let ab: Vec<f64> = rows
        .iter()
        .filter(|r| r.kind == RecordKind::Link && r.id == "AB")
        .map(|r| r.price.unwrap())
        .collect();
    let ab_summary = summary.links.iter().find(|l| l.id == "AB").unwrap();
    assert_eq!(ab_summary.final_value, *ab.last().unwrap());
    let tail = &ab[ab.len() - 100..];
    let amp = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    assert_eq!(ab_summary.final_amplitude, amp);
    assert_eq!(ab_summary.converged, Some(true));
    assert!(!ab_summary.oscillation.is_empty());
}

#[test]
fn run_is_reproducible_and_takes_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.json", "b.json"] {
        let p = dir.path().join(name);
        let out = bin()
            .args(["run", "--format", "json", "--max-iterations", "120", "--sigma0", "40"])
            .arg("--scenario")
            .arg(default_scenario())
            .arg("--out")
            .arg(&p)
            .output()
            .unwrap();
        ok(&out);
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let rows: serde_json::Value = serde_json::from_slice(&files[0]).unwrap();
    let last = rows.as_array().unwrap().last().unwrap();
    assert_eq!(last["iteration"], 119);
}

#[test]
fn run_to_stdout() {
    let out = bin()
        .args(["run", "--max-iterations", "3"])
        .arg(default_scenario())
        .output()
        .unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * (7 + 8));
    assert!(String::from_utf8(out.stderr).unwrap().contains("3 iterations"));
}

#[test]
fn invalid_override_fails() {
    let out = bin()
        .args(["run", "--delta-u", "-1"])
        .arg(default_scenario())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_u"));
}

#[test]
fn validate_accepts_default_and_rejects_bad_schedule() {
    let out = bin().arg("validate").arg(default_scenario()).output().unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("8 users"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"links":[{"id":"AB","capacity":5}],"users":[{"id":0,"route":"AB","budget":10,"layers":[5,2]}]}"#,
    )
    .unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("non-increasing layer schedule at `users[0].layers`"),
        "{err}"
    );

    let out = bin()
        .arg("validate")
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn admission_compare_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cmp.csv");
    let out = bin()
        .args([
            "admission-compare",
            "--users",
            "10",
            "--instances",
            "50",
            "--seed",
            "7",
            "--out",
        ])
        .arg(&p)
        .output()
        .unwrap();
    ok(&out);
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance,greedy_objective,oracle_objective,ratio"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i as f64);
        assert!(r[1] <= r[2]);
        assert!(r[3] <= 1.0 && r[3] > 0.0);
    }

    let again = bin()
        .args(["admission-compare", "--users", "10", "--instances", "50", "--seed", "7"])
        .output()
        .unwrap();
    ok(&again);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);

    let too_many = bin().args(["admission-compare", "--users", "21"]).output().unwrap();
    assert!(!too_many.status.success());
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let out = bin().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
