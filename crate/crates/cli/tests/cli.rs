use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlab")).args(args).env_remove("VLAB_OUT_DIR").output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn verify_defaults_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = vlab(&["verify", "--grid", "64", "--quiet", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(o.stdout.is_empty());
    let s = summary(&out);
    assert_eq!(s["verdict"], "pass");
    let names: Vec<&str> = s["assertions"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    for want in ["commutator_exact", "der", "leibniz", "g1_margin", "g1_chain", "intertwining_exact", "star_associative"] {
        assert!(names.iter().any(|n| n.starts_with(want)), "missing {want}");
    }
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("| assertion | anchor | measured | tolerance | verdict |"));
    assert!(md.contains("`|h(CS RT^n x)| <= c (n+1)^-1 |RT^n x|`"));
    assert!(out.join("run_info.json").exists());
}

#[test]
fn certify_writes_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = vlab(&["certify", "--config", scenario("08_gaussian_certificate.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["seed"], 42);
    assert_eq!(cert["k"], 4);
    assert!(out.join("certificate.functionals.csv").exists());
    assert!(out.join("small_ball.csv").exists());
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    for (i, text) in [
        "{ not json",
        r#"{"name": "x", "kind": "verify", "params": {"operator": "Q"}}"#,
        r#"{"name": "x", "kind": "verify", "params": {"bogus": 1}}"#,
        r#"{"name": "x", "kind": "orbit"}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(tmp.path(), &format!("bad{i}.json"), text);
        let o = vlab(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{text} left outputs");
    }
    let o = vlab(&["verify", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_assertion_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"name": "c", "kind": "commutant", "params": {"grids": [8], "expect_dimension": 2}}"#);
    let out = tmp.path().join("o");
    let o = vlab(&["commutant", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(summary(&out)["verdict"], "fail");
}

#[test]
fn summaries_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("09_kronecker.json");
    let mut texts = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = vlab(&["kronecker", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
        assert_eq!(o.status.code(), Some(0));
        texts.push((
            std::fs::read(out.join("summary.json")).unwrap(),
            std::fs::read(out.join("density.csv")).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
    // a different seed changes the draws
    let out = tmp.path().join("c");
    vlab(&["kronecker", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "10", "--quiet"]);
    assert_ne!(std::fs::read(out.join("density.csv")).unwrap(), texts[0].1);
}

#[test]
fn out_dir_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vlab"))
        .args(["commutant", "--quiet"])
        .env("VLAB_OUT_DIR", tmp.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&tmp.path().join("env"))["scenario"], "commutant");
}

#[test]
fn kind_mismatch_is_a_config_error() {
    let o = vlab(&["orbit", "--config", scenario("07_joint_commutant.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_aggregates_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let empty = write(tmp.path(), "empty.json", r#"{"name": "empty", "kind": "orbit", "params": {"grid": 16, "n_max": 3}}"#);
    let o = vlab(&[
        "report",
        "--config",
        scenario("03_der.json").to_str().unwrap(),
        "--config",
        scenario("07_joint_commutant.json").to_str().unwrap(),
        "--config",
        empty.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let s = summary(&out);
    assert_eq!(s["verdict"], "pass");
    assert_eq!(s["scenarios"].as_array().unwrap().len(), 3);
    assert_eq!(summary(&out.join("der"))["verdict"], "pass");
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("| no assertions | - | - | - | FLAGGED |"));
    assert!(md.contains("**Aggregate verdict: PASS**"));

    let o = vlab(&["report", "--config", empty.to_str().unwrap(), "--config", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_are_well_formed() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["name"].is_string() && v["kind"].is_string(), "{}", path.display());
        count += 1;
    }
    assert_eq!(count, 12);
}
