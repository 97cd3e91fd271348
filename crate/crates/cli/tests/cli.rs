use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use harness::commands::{BranchRow, SolveSummary};
use harness::report::{read_csv, ReportRow};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stablab(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("STABLAB_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bad_config_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "bad.json", r#"{"problem": {"domain": {"kind": "box", "lo": [0], "hi": [1]}, "lambda": 1, "typo": 3}}"#);
    let o = stablab(&["solve"], &c, d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("typo") && err.contains("line"), "{err}");

    let missing = stablab(&["solve"], &d.path().join("nope.json"), d.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn beyond_fold_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let c = write(
        d.path(),
        "c.json",
        r#"{"problem": {"domain": {"kind": "box", "lo": [0], "hi": [1]}, "lambda": 4.0}, "grid": {"h": 0.0078125}}"#,
    );
    assert_eq!(stablab(&["solve"], &c, d.path()).status.code(), Some(3));
}

#[test]
fn perturbation_above_eps0_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let o = stablab(&["verify", "--no-timestamp"], &configs().join("eps_probe.json"), d.path());
    assert_eq!(o.status.code(), Some(4));
    let rows: Vec<ReportRow> = read_csv(&d.path().join("report.csv")).unwrap();
    assert!(rows.iter().any(|r| !r.pass && r.params.contains("eps above eps0")));
}

#[test]
fn zero_lambda_dumps_zeros() {
    let d = tempfile::tempdir().unwrap();
    let o = stablab(&["solve"], &configs().join("zero_lambda.json"), d.path());
    assert_eq!(o.status.code(), Some(0));
    let dump = harness::dump::read(&d.path().join("solution.stbl")).unwrap();
    assert_eq!(dump.values.len(), dump.shape.iter().product::<usize>());
    assert!(dump.values.iter().all(|v| *v == 0.0));
}

#[test]
fn gelfand_1d_maximum() {
    let d = tempfile::tempdir().unwrap();
    let o = stablab(&["solve"], &configs().join("gelfand_1d.json"), d.path());
    assert_eq!(o.status.code(), Some(0));
    let s: Vec<SolveSummary> = read_csv(&d.path().join("summary.csv")).unwrap();
    assert!((s[0].max_u - 0.14054).abs() < 1e-3, "{:?}", s[0]);
    let text = std::fs::read_to_string(d.path().join("summary.csv")).unwrap();
    assert!(text.starts_with("# generated_unix="));
}

#[test]
fn linear_branch_stops_at_first_eigenvalue() {
    let d = tempfile::tempdir().unwrap();
    let o = stablab(&["branch", "--threads", "1"], &configs().join("linear_1d.json"), d.path());
    assert_eq!(o.status.code(), Some(0));
    let b: Vec<BranchRow> = read_csv(&d.path().join("branch.csv")).unwrap();
    let last = b.last().unwrap().lambda;
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((last - pi2).abs() / pi2 < 1e-3, "{last}");
}

#[test]
fn bless_then_regress() {
    let d = tempfile::tempdir().unwrap();
    let fixtures = d.path().join("fx.json");
    let body = format!(
        r#"{{"run_id": "r", "problem": {{"domain": {{"kind": "half_ball", "dim": 2}}, "lambda_fraction": 0.5}},
            "grid": {{"h": 0.0625}}, "estimators": {{"checks": ["thm11", "lemma31"]}},
            "output": {{"fixtures": {fixtures:?}}}}}"#
    );
    let c = write(d.path(), "c.json", &body);
    let o = stablab(&["verify", "--bless"], &c, &d.path().join("a"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fx: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fixtures).unwrap()).unwrap();
    assert!(fx["runs"]["r"]["thm11.energy"].is_number());
    for key in fx["runs"]["r"].as_object().unwrap().keys() {
        assert!(harness::verify::REGRESSION_CHECKS.contains(&key.as_str()), "{key}");
    }

    let o = stablab(&["verify"], &c, &d.path().join("b"));
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<ReportRow> = read_csv(&d.path().join("b/report.csv")).unwrap();
    assert!(rows.iter().any(|r| r.params.contains("regression_bound=")));

    // a reference ten times smaller than the computed ratio must fail
    let mut fx = fx;
    let energy = fx["runs"]["r"]["thm11.energy"].as_f64().unwrap();
    fx["runs"]["r"]["thm11.energy"] = serde_json::json!(energy / 20.0);
    std::fs::write(&fixtures, fx.to_string()).unwrap();
    let o = stablab(&["verify"], &c, &d.path().join("c"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn thread_count_from_env() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stablab"))
        .args(["verify", "--no-timestamp", "--config"])
        .arg(configs().join("zero_field.json"))
        .arg("--out")
        .arg(d.path())
        .env("STABLAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(d.path().join("report.csv")).unwrap();
    assert!(!text.starts_with('#'));
}
