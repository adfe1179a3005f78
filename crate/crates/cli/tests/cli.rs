use std::path::Path;
use std::process::Command;

fn addeq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_addeq"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"{"seed": 5, "n": 512, "d": 2, "K": 8, "J": 2, "G": 16, "T": 64, "sigma": 1.0, "rho": 0.5,
 "beta": 1.0, "alpha": 0.0, "reps": 60, "design": {"family": "pairwise_perturbed", "theta": 0.3},
 "suites": ["simulate", "operator", "regime"], "gamma_indices": [1, 2, 3, 4]}"#;

#[test]
fn missing_sigma_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &SMALL.replace(r#""sigma": 1.0, "#, ""));
    let out = addeq().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
}

#[test]
fn regime_only_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", r#"{"beta": 1.0, "alpha": 0.0}"#);
    let o = dir.path().join("o");
    let out = addeq().args(["regime", "--config"]).arg(&cfg).arg("--out").arg(&o).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("regime.json")).unwrap()).unwrap();
    assert_eq!(v["feasible"], true);
    assert_eq!(v["gamma_window"][0].as_f64().unwrap(), 0.5);
    assert!((v["gamma_window"][1].as_f64().unwrap() - 0.667).abs() < 1e-3);
    assert!(o.join("manifest.json").exists());
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    for name in ["a", "b"] {
        let out = addeq().args(["run", "--threads", "1", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(name)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["stages.csv", "gamma.csv", "gamma_l.csv", "summary.csv", "reports.json", "empirical_gamma.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let out = addeq().args(["run", "--seed", "6", "--suite", "simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("c")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a/stages.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/stages.csv")).unwrap();
    assert_ne!(a, c);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("c/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 6);
    assert_eq!(m["suites"], serde_json::json!(["simulate"]));
}

#[test]
fn invalid_design_names_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &SMALL.replace(r#""rho": 0.5"#, r#""rho": 0.95"#));
    let out = addeq().args(["operator", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("density bounds"));
}

#[test]
fn defaults_dump_is_a_valid_config() {
    let out = addeq().arg("defaults").output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", &String::from_utf8(out.stdout).unwrap());
    let text = std::fs::read_to_string(cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["T"], 1024);
    assert_eq!(v["J"], "auto");
}

#[test]
fn unknown_suite_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let out = addeq().args(["run", "--suite", "bogus", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
