use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arlequin_cli::output::read_results;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arlequin"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sweep_writes_results_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quick.toml");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let rows = read_results(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].eps > rows[1].eps);
    for r in &rows {
        assert!(r.ok());
        assert!((r.k11.unwrap() - 3.0).abs() < 1e-6);
        assert!(r.error.unwrap() < 1e-6);
    }
    assert!(dir.path().join("timings.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], rows[0].config_hash.as_str());

    let results = dir.path().join("results.csv");
    let o = run(&["report", "--results", results.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fitted log-log slope"));
}

#[test]
fn single_commands_run() {
    let cfg = config("quick.toml");
    let cfg = cfg.to_str().unwrap();
    let o = run(&["objective", "--config", cfg, "--kbar", "3"]);
    assert!(o.status.success());
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let j: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
    assert!(j < 1e-20, "{line}");

    let o = run(&["optimize", "--config", cfg, "--eps", "0.125"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("kbar_opt = (3.0000000"));

    let o = run(&["check-conditions", "--config", cfg]);
    assert!(o.status.success(), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--config", cfg, "--kbar", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(dir.path().join("solution.csv")).unwrap().starts_with("node,x,y,value,field"));

    let o = run(&["oracle", "--config", cfg]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("constant,16,3.0"));
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("quick.toml")).unwrap() + "\nunknown_key = 1\n";
    std::fs::write(&p, text).unwrap();
    let o = run(&["objective", "--config", p.to_str().unwrap(), "--kbar", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));
}

#[test]
fn invalid_coefficient_params_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    // Constant coefficient parameters are either `c` or the matrix entries, not both.
    let text = std::fs::read_to_string(config("quick.toml")).unwrap().replace("c = 3.0", "c = 3.0, k12 = 0.0");
    std::fs::write(&p, text).unwrap();
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unmet_threshold_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("strict.toml");
    let text = std::fs::read_to_string(config("quick.toml"))
        .unwrap()
        .replace("name = \"constant\"", "name = \"smooth_trig\"")
        .replace("params = { c = 3.0 }", "")
        .replace("max_rel_error = 1e-6", "max_rel_error = 1e-12");
    std::fs::write(&p, text).unwrap();
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("threshold not met"));
    assert!(stdout(&o).contains("under-resolved"));
}
