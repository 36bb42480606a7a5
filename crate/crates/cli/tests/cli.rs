use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

fn semirad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semirad"))
        .args(args)
        .env("SEMIRAD_THREADS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// A copy of a bundled scenario with text substitutions, written to `dir`.
fn variant(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(scenario(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in {name}");
        text = text.replace(from, to);
    }
    let path = dir.join(format!("{name}_variant.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_bundled_scenario() {
    let o = semirad(&[
        "validate",
        "--scenario",
        scenario("free_packet_oracle").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("valid"));
}

#[test]
fn band_limit_violation_is_numerical_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let p = variant(
        dir.path(),
        "free_packet_oracle",
        &[("sigma_k = [0.04, 0.04, 0.04]", "sigma_k = [0.3, 0.3, 0.3]")],
    );
    let o = semirad(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let o = semirad(&["certify", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = variant(
        dir.path(),
        "newtonian_ensemble",
        &[("closed_form = true", "closed_form = true\nbogus = 1")],
    );
    let o = semirad(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = semirad(&[
        "validate",
        "--scenario",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&semirad(&["frobnicate"])), 2);
}

#[test]
fn run_writes_outputs_and_compare_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = semirad(&[
        "run",
        "--scenario",
        scenario("newtonian_ensemble").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("newtonian_ensemble: pass"));
    for f in ["certificate.json", "moments.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let cert = out.join("certificate.json");
    let o = semirad(&["compare", cert.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&o), 0);

    let text = std::fs::read_to_string(&cert).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let delta = v["closed_form_delta"].as_f64().unwrap();
    v["closed_form_delta"] = serde_json::json!(delta + 1.0);
    let other = dir.path().join("other.json");
    std::fs::write(&other, serde_json::to_string(&v).unwrap()).unwrap();
    let o = semirad(&["compare", cert.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("closed_form_delta"));

    std::fs::write(&other, "{ not json").unwrap();
    assert_eq!(
        code(&semirad(&[
            "compare",
            cert.to_str().unwrap(),
            other.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = variant(
        dir.path(),
        "newtonian_ensemble",
        &[("expect = \"nonradiating\"", "expect = \"radiating\"")],
    );
    let o = semirad(&["certify", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
