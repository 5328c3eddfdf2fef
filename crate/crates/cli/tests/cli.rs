//! End-to-end runs of the `jumpsmooth` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jumpsmooth"));
    c.env_remove("JUMPSMOOTH_OUT_DIR");
    c
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[run]
seed = 11
samples = 2000

[model]
horizon = 1.0
[[model.nu]]
kind = "atom"
at = 1.0
mass = 2.0

[boxes]
A = [[0.0, 1.0, 0.5, 1.5]]

[functionals]
N = "count(A)"

[[checks]]
name = "mecke-count"
kind = "mecke"
functional = "N"
box = "A"
expect = 6.0

[[checks]]
name = "band"
kind = "equivalence_ratio"
functional = "N"
box = "A"
"#;

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("exp.cfg");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn validate_accepts_a_good_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok (2 checks)"));
    assert!(o.stderr.is_empty());
}

#[test]
fn validate_rejects_a_gaussian_part() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &SMALL.replace("horizon = 1.0", "horizon = 1.0\nsigma = 0.1"));
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("out of scope"), "{}", stderr(&o));
}

#[test]
fn undeclared_box_is_one_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &SMALL.replace("N = \"count(A)\"", "N = \"count(Q)\""));
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("1 problem(s)"), "{err}");
    assert!(err.contains('Q'), "{err}");
}

#[test]
fn run_rejects_invalid_configs_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &SMALL.replace("seed = 11\n", ""));
    let out = tmp.path().join("out");
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn demo_lists_bundled_configs() {
    let o = bin().args(["demo", "--list"]).output().unwrap();
    assert!(o.status.success());
    let names = String::from_utf8_lossy(&o.stdout).into_owned();
    for n in ["theorem31", "isometry", "orlicz", "surrogate"] {
        assert!(names.lines().any(|l| l == n), "{names}");
    }
}

#[test]
fn unknown_demo_is_an_error() {
    let o = bin().args(["demo", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("available"));
}

#[test]
fn run_writes_a_json_report_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let mut reports = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = tmp.path().join(tag);
        let mut cmd = bin();
        cmd.arg("run").arg(&cfg).args(["--workers", workers, "--out"]).arg(&out);
        if tag == "c" {
            cmd.arg("--parallel-checks");
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("PASS mecke-count"));
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["manifest"]["checks"], 2);
    assert_eq!(v["records"][0]["check"], "mecke-count");
    assert_eq!(v["records"][1]["check"], "band");
}

#[test]
fn manifest_hash_tracks_config_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |body: &str, tag: &str| {
        let dir = tmp.path().join(tag);
        fs::create_dir_all(&dir).unwrap();
        let cfg = write_cfg(&dir, body);
        let o = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("out/report.json")).unwrap()).unwrap();
        v["manifest"]["config_sha256"].as_str().unwrap().to_string()
    };
    let base = hash(SMALL, "a");
    assert_eq!(base, hash(SMALL, "b"));
    assert_ne!(base, hash(&format!("{SMALL}\n# comment\n"), "c"));
}

#[test]
fn csv_format_and_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("from-env");
    let o = bin().arg("run").arg(&cfg).args(["--format", "csv"]).env("JUMPSMOOTH_OUT_DIR", &out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("check,kind,inputs_digest,"));
    assert_eq!(report.lines().count(), 3);
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert!(manifest.contains("all_pass,true"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &SMALL.replace("expect = 6.0", "expect = 60.0"));
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("out")).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL mecke-count"));
}

#[test]
fn demo_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("orlicz");
    let o = bin().args(["demo", "orlicz", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("counterexample-a2.d12_trace.csv")).unwrap();
    assert!(trace.starts_with("m,partial_sum"));
}
