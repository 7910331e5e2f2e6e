use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cavi_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavi-lab"))
        .args(args)
        .output()
        .expect("spawn cavi-lab")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn converging_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gc.json", r#"{"model": {"type": "gauss_conditionals"}}"#);
    let out_dir = dir.path().join("out");
    let out = cavi_lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("iter,d_half_total,d_half_block_0,d_half_block_1,ratio,objective_gap\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "converged");
    assert!(String::from_utf8_lossy(&out.stdout).contains("Converged"));
}

#[test]
fn diverging_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cs.json",
        r#"{"model": {"type": "compound_symmetry", "d": 5, "rho": 0.3}, "output": {"dir": "out"}}"#,
    );
    let out = cavi_lab(&["--quiet", "run", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "diverged");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write_config(
        dir.path(),
        "rand.json",
        r#"{"model": {"type": "gauss_conditionals"}, "schedule": {"type": "randomized"}}"#,
    );
    let out = cavi_lab(&["run", "--config", &no_seed]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let unknown = write_config(dir.path(), "bad.json", r#"{"model": {"type": "gauss_conditionals"}, "iters": 3}"#);
    let out = cavi_lab(&["run", "--config", &unknown]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("iters"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&cavi_lab(&["run", "--config", missing.to_str().unwrap()])), 1);
}

#[test]
fn seed_flag_fills_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gen.json",
        r#"{"generate": {"family": "gmm2", "n": 200, "mu_true": 4.0, "truncate": 0.5},
            "schedule": {"type": "sequential"}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = cavi_lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let out = cavi_lab(&["run", "--config", &cfg, "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
    assert!(report["two_stage"]["product"].as_f64().unwrap() < 1.0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&cavi_lab(&[])), 1);
    assert_eq!(code(&cavi_lab(&["frobnicate"])), 1);
    assert_eq!(code(&cavi_lab(&["run"])), 1);
    assert_eq!(code(&cavi_lab(&["run", "--config", "x.json", "--seed", "minus-one"])), 1);
    assert_eq!(code(&cavi_lab(&["--help"])), 0);
    assert_eq!(code(&cavi_lab(&["--version"])), 0);
}

#[test]
fn gcorr_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cs.json",
        r#"{"model": {"type": "compound_symmetry", "d": 3, "rho": 0.2}, "gcorr": {"budget": 300}}"#,
    );
    let out = cavi_lab(&["gcorr", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("gcorr.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
    for key in ["model", "r0", "gcorr_bound", "kappa", "spectral_radius", "empirical"] {
        assert!(written.get(key).is_some(), "missing {key}");
    }
    let bound = written["gcorr_bound"].as_f64().unwrap();
    assert!((bound - 0.4 * 2f64.sqrt()).abs() < 1e-12);
    assert!(written["empirical"]["value"].as_f64().unwrap() <= bound + 1e-6);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{"model": {"type": "compound_symmetry", "d": 3, "rho": 0.1},
            "sweep": {"params": [{"name": "rho", "values": [0.1, 0.3, 0.6]}]}}"#,
    );
    let out = cavi_lab(&["--quiet", "sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,verdict,tail_ratio,kappa");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains(",converged,"));
    assert!(lines[2].contains(",converged,"));
    assert!(lines[3].contains(",diverged,"));

    let capped = write_config(
        dir.path(),
        "capped.json",
        r#"{"model": {"type": "discrete2d", "p": 0.5},
            "sweep": {"params": [{"name": "p", "start": 0.1, "stop": 0.9, "count": 50}], "max_points": 10}}"#,
    );
    assert_eq!(code(&cavi_lab(&["sweep", "--config", &capped])), 1);
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cavi_lab(&["oracle-check", "--pairs", "8", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 18);
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("oracle_check.json")).unwrap()).unwrap();
    assert!(results.as_array().unwrap().iter().all(|r| r["failures"] == 0));
}
