//! End-to-end checks of the `pml` binary: decisions, exit codes, and
//! report formats, driven against the checked-in fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str, file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .join(file)
        .display()
        .to_string()
}

fn pml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pml")).args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn enforce_rmd(values: &[&str]) -> Output {
    let model = fixture("rmd", "model.pml");
    let policy = fixture("rmd", "policy.csv");
    let mut args = vec!["enforce", "-m", &model, "-p", &policy];
    args.extend(values);
    pml(&args)
}

#[test]
fn allow_prints_allow_and_exits_zero() {
    let out = enforce_rmd(&["admin", "/workloads/5", "DELETE"]);
    assert_eq!(stdout(&out), "allow\n");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn deny_prints_deny_and_exits_one() {
    let out = enforce_rmd(&["user", "/workloads", "POST"]);
    assert_eq!(stdout(&out), "deny\n");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_policy_file_is_a_diagnostic_exit() {
    let model = fixture("rmd", "model.pml");
    let out = pml(&["enforce", "-m", &model, "-p", "/no/such/file.csv", "a", "b", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/file.csv"), "{}", stderr(&out));
}

#[test]
fn request_arity_mismatch_is_an_error() {
    let out = enforce_rmd(&["admin", "/workloads"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("request attributes"), "{}", stderr(&out));
}

#[test]
fn at_file_values_carry_nested_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("obj.json");
    std::fs::write(&obj, r#"{"tenant": "tenant1", "name": "vm1"}"#).unwrap();
    let model = fixture("tenant", "model.pml");
    let policy = fixture("tenant", "policy.csv");
    let at = format!("@{}", obj.display());

    let out = pml(&["enforce", "-m", &model, "-p", &policy, "Alice", &at, "manage"]);
    assert_eq!(stdout(&out), "allow\n", "{}", stderr(&out));

    std::fs::write(&obj, r#"{"tenant": "tenant2", "name": "vm1"}"#).unwrap();
    let out = pml(&["enforce", "-m", &model, "-p", &policy, "Alice", &at, "manage"]);
    assert_eq!(stdout(&out), "deny\n");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fail_closed_deny_exits_with_the_error_code() {
    // The tenant matcher dereferences r.obj.tenant; a plain string object
    // makes that a MissingAttribute error, which still denies.
    let model = fixture("tenant", "model.pml");
    let policy = fixture("tenant", "policy.csv");
    let out = pml(&["enforce", "-m", &model, "-p", &policy, "Alice", "vm1", "use"]);
    assert_eq!(stdout(&out), "deny\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("r.obj.tenant"), "{}", stderr(&out));
}

#[test]
fn validate_accepts_the_demo_fixtures() {
    for name in ["rmd", "tenant", "openstack", "acl"] {
        let model = fixture(name, "model.pml");
        let policy = fixture(name, "policy.csv");
        let out = pml(&["validate", "-m", &model, "-p", &policy]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stdout(&out));
        assert_eq!(stdout(&out), "ok\n");
    }
}

#[test]
fn validate_reports_undeclared_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.pml");
    std::fs::write(
        &model,
        "r = sub\np = sub\nm = r.sub == p.sub && r.missing == 1\ne = some(where (p.eft == allow))\n",
    )
    .unwrap();
    let out = pml(&["validate", "-m", &model.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("missing"), "{}", stdout(&out));
}

#[test]
fn validate_reports_policy_arity_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("short.csv");
    std::fs::write(&policy, "p, alice, /data\n").unwrap();
    let model = fixture("rmd", "model.pml");
    let out = pml(&["validate", "-m", &model, "-p", &policy.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).to_lowercase().contains("value"), "{}", stdout(&out));
}

#[test]
fn bench_text_report_carries_the_metadata() {
    let model = fixture("rmd", "model.pml");
    let policy = fixture("rmd", "policy.csv");
    let out = pml(&["bench", "-m", &model, "-p", &policy, "--requests", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    for needle in ["rules: 9", "matcher nodes:", "median", "p99"] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}

#[test]
fn bench_json_matches_the_contract_schema() {
    let model = fixture("rmd", "model.pml");
    let policy = fixture("rmd", "policy.csv");
    let out = pml(&["bench", "-m", &model, "-p", &policy, "--requests", "150", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let object = report.as_object().unwrap();
    let mut keys: Vec<&str> = object.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["count", "mean_us", "median_us", "min_us", "p99_us"]);
    assert_eq!(object["count"], 150);
}

#[test]
fn bench_rejects_zero_requests() {
    let model = fixture("rmd", "model.pml");
    let policy = fixture("rmd", "policy.csv");
    let out = pml(&["bench", "-m", &model, "-p", &policy, "--requests", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_replays_a_corpus_file() {
    // The openstack model binds one rule value but three request values, so
    // synthesis must refuse and --corpus must work.
    let model = fixture("openstack", "model.pml");
    let policy = fixture("openstack", "policy.csv");
    let corpus = fixture("openstack", "corpus.jsonl");

    let out = pml(&["bench", "-m", &model, "-p", &policy, "--requests", "50"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--corpus"), "{}", stderr(&out));

    let out =
        pml(&["bench", "-m", &model, "-p", &policy, "--requests", "50", "--corpus", &corpus]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn bench_threads_mode_runs() {
    let model = fixture("acl", "model.pml");
    let policy = fixture("acl", "policy.csv");
    let out = pml(&[
        "bench", "-m", &model, "-p", &policy, "--requests", "200", "--threads", "4", "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["count"], 200);
}

#[test]
fn cli_decisions_match_the_library_on_the_rmd_corpus() {
    let text = std::fs::read_to_string(fixture("rmd", "corpus.jsonl")).unwrap();
    // Every 7th case keeps the test fast while still crossing subjects,
    // endpoints, and methods.
    for line in text.lines().step_by(7) {
        let case: serde_json::Value = serde_json::from_str(line).unwrap();
        let values: Vec<&str> =
            case["request"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let out = enforce_rmd(&values);
        let expected = if case["expected"].as_bool().unwrap() { "allow\n" } else { "deny\n" };
        assert_eq!(stdout(&out), expected, "request {values:?}");
    }
}
