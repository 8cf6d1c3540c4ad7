use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn critmat(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critmat"))
        .env_remove("CRITMAT_SEED")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn calibrate_writes_a_loadable_spec() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("two_j.json");
    let o = critmat(dir.path(), &["--spec", s.to_str().unwrap(), "calibrate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cal = critmat::ensemble::EnsembleSpec::from_path(dir.path().join("spec.json")).unwrap();
    assert!((cal.scale() - 0.25).abs() < 1e-9);
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn failed_hypotheses_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("identity.json");
    let o = critmat(dir.path(), &["--spec", s.to_str().unwrap(), "check-hypotheses", "--n", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_spec_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dim\": 2,").unwrap();
    let out = dir.path().join("out");
    let o = critmat(&out, &["--spec", bad.to_str().unwrap(), "check-hypotheses"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!out.exists());
}

#[test]
fn missing_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(critmat(dir.path(), &["clt"]).status.code(), Some(1));
}

#[test]
fn environment_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("full_rank_s05.json");
    let run = |sub: &str, seed: &str, env: Option<&str>| {
        let out = dir.path().join(sub);
        let mut c = Command::new(env!("CARGO_BIN_EXE_critmat"));
        c.env_remove("CRITMAT_SEED");
        if let Some(v) = env {
            c.env("CRITMAT_SEED", v);
        }
        let o = c
            .args(["--spec", s.to_str().unwrap(), "--seed", seed, "--out"])
            .arg(&out)
            .args(["estimate-lyapunov", "--n", "200", "--reps", "8"])
            .output()
            .unwrap();
        assert!(o.status.success());
        summary(&out)
    };
    let flag = run("flag", "7", None);
    let env = run("env", "1", Some("7"));
    let other = run("other", "1", None);
    assert_eq!(flag, env);
    assert_ne!(flag, other);
}

#[test]
fn tail_report_reads_a_histogram_without_spec() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("rank_one_mixture_quarter.json");
    let m = dir.path().join("m");
    let o = critmat(&m, &["--spec", s.to_str().unwrap(), "invariant-measure", "--n", "2000000"]);
    assert!(o.status.code().unwrap() <= 2);
    let hist = m.join("histogram.csv");
    let t = dir.path().join("t");
    let o = critmat(&t, &["tail-report", "--histogram", hist.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(t.join("tail.csv").exists());
}
