use std::path::Path;
use std::process::{Command, Output};

fn virobac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virobac"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn crp_rule_fit_then_apply() {
    let dir = tempfile::tempdir().unwrap();
    assert!(virobac(dir.path(), &["synth", "--n", "400", "--seed", "3", "--out", "c.csv"]).status.success());

    let fit = virobac(dir.path(), &["crp-rule", "--fit", "c.csv"]);
    assert!(fit.status.success());
    let text = String::from_utf8(fit.stdout).unwrap();
    let threshold: f64 = text.lines().next().unwrap().strip_prefix("threshold ").unwrap().parse().unwrap();
    assert!(threshold > 0.0 && threshold.is_finite());

    let apply = virobac(dir.path(), &["crp-rule", "--apply", "c.csv", "--threshold", "24"]);
    assert!(apply.status.success());
    let out = String::from_utf8(apply.stdout).unwrap();
    assert_eq!(out.lines().next(), Some("case_id,crp,prediction"));
    assert_eq!(out.lines().count(), 401);
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let crp: f64 = f[1].parse().unwrap();
        assert_eq!(f[2], if crp < 24.0 { "VIRUS" } else { "BACTERIA" });
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = virobac(dir.path(), &["cv", "--data", "nope.csv"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    assert!(virobac(dir.path(), &["synth", "--n", "50", "--out", "c.csv"]).status.success());
    let bad = virobac(dir.path(), &["train", "--family", "SVM", "--train", "c.csv", "--out-model", "m.json"]);
    assert!(!bad.status.success());
    assert!(!dir.path().join("m.json").exists());
}
