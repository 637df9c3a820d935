use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dictator"));
    cmd.env_remove("DICTATOR_OUTPUT_ROOT");
    cmd
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().expect("some stdout");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn small(kind: &str, roles: &str) -> String {
    format!(
        r#"
schema_version = 1
name = "tiny"
scenario_kind = "{kind}"
seed = 3

[model]
kind = "linear_softmax"

[dataset]
source = "blobs"
num_classes = 6
dim = 4
per_class = 10
sigma = 0.5

[partition]
labels_per_client = 2

[protocol]
eta = 0.05
rounds = 6
num_clients = 3
{roles}
"#
    )
}

#[test]
fn malformed_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = small("single_dictator", "")
        .replace("eta = 0.05", "eta = -1.0")
        .replace("seed = 3", "seed = 3\nholdout_fraction = 1.5");
    std::fs::write(&path, text).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "invalid_config");
    // eta, holdout and the missing dictator role
    assert!(summary["errors"].as_array().unwrap().len() >= 3, "{summary}");
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, small("regular", "").replace("seed = 3", "seed = 3\nsede = 4")).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn report_on_empty_dir_says_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["status"], "no_artifacts");
    assert!(String::from_utf8_lossy(&out.stderr).contains("no artifacts"));
}

#[test]
fn verify_betrayal_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("verify")
        .arg(scenario("betrayal"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checks: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("checks.json")).unwrap()).unwrap();
    assert_eq!(checks["all_passed"], true);
    assert_eq!(checks["checks"][0]["check"]["claim_id"], "betrayal");

    let report = bin().arg("report").arg(dir.path()).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("betrayal"));
    assert!(text.contains("check betrayal: pass"));
}

#[test]
fn run_writes_all_artifacts_with_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(&path, small("single_dictator", "[roles.2]\nrole = \"dictator\"")).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg(&path).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["curves.csv", "accuracy.json", "checks.json", "stamp.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let cfg = dictator_harness::parse_config(&path).unwrap();
    let stamp: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("stamp.json")).unwrap()).unwrap();
    assert_eq!(stamp["config_sha256"], dictator_harness::output::config_hash(&cfg));
    assert_eq!(stamp["seed"], 3);
    let curves = std::fs::read_to_string(out_dir.join("curves.csv")).unwrap();
    // header plus rounds x clients
    assert_eq!(curves.lines().count(), 1 + 6 * 3);
    let acc = std::fs::read_to_string(out_dir.join("accuracy.json")).unwrap();
    let v: Value = serde_json::from_str(&acc).unwrap();
    assert!(v["accuracy"]["2"].is_number());
    let line = acc.lines().find(|l| l.trim_start().starts_with("\"2\":")).unwrap();
    let digits = line.trim().trim_end_matches(',').rsplit('.').next().unwrap();
    assert_eq!(digits.len(), 2, "{line}");
}

#[test]
fn output_root_env_var_redirects_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(&path, small("regular", "")).unwrap();
    let root = dir.path().join("root");
    let out = bin()
        .env("DICTATOR_OUTPUT_ROOT", &root)
        .current_dir(dir.path())
        .arg("run")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("tiny").join("accuracy.json").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn probe_eta_subcommand() {
    let out = bin().arg("probe-eta").arg(scenario("probe")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["relative_error"].as_f64().unwrap() <= 1e-4);
    assert!(v["relative_error"].as_f64().unwrap() <= v["relative_error_bound"].as_f64().unwrap());
}

#[test]
fn missing_config_file_is_invalid() {
    let out = bin().arg("run").arg("/nonexistent/x.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
