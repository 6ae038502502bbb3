use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kernel_observer::experiment::ExperimentConfig;
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernel-observer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a 16-point variant of the reduced experiment and returns its path.
fn small_config(dir: &Path, amplitude: f64) -> String {
    let mut cfg = ExperimentConfig::bundled("table1_ci").unwrap();
    cfg.grid.n_points = 16;
    cfg.inputs.amplitude = amplitude;
    cfg.pe.window = 2.0;
    cfg.pe.scan_stride = 1.0;
    cfg.output.directory = dir.join("run");
    let path = dir.join("small.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn check_prints_diagnostics_for_a_bundled_config() {
    let out = cli(&["check", "table1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("gain condition holds  = true"), "{text}");
    assert!(text.contains("alpha"), "{text}");
}

#[test]
fn quiet_check_prints_nothing() {
    let out = cli(&["--quiet", "check", "table1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["check", "no-such-config"]);
    assert_eq!(out.status.code(), Some(2));

    let path = dir.path().join("bad.toml");
    let text = ExperimentConfig::bundled("table1")
        .unwrap()
        .to_toml_string()
        .replace("gamma1 = 100.0", "gamma1 = 0.0");
    fs::write(&path, text).unwrap();
    let out = cli(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("gains.gamma1 must be > 0"),
        "{}",
        stderr(&out)
    );

    fs::write(&path, "not = [valid").unwrap();
    assert_eq!(
        cli(&["check", path.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn run_then_rescan() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path(), 20.0);
    let out_dir = dir.path().join("override");
    let out = cli(&[
        "run",
        &config,
        "--t-final",
        "5",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("dropping snapshot times"));
    assert!(stdout(&out).contains("e_W22"));
    for file in [
        "manifest.toml",
        "errors.csv",
        "what22_t0.csv",
        "pe_scan.csv",
    ] {
        assert!(out_dir.join(file).is_file(), "{file} missing");
    }
    assert!(!dir.path().join("run").exists());

    let out = cli(&["pe", out_dir.to_str().unwrap(), "--window", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rescan = fs::read_to_string(out_dir.join("pe_rescan.csv")).unwrap();
    // window starts 0, 1, 2 on [0, 5]
    assert_eq!(rescan.lines().count(), 4, "{rescan}");
}

#[test]
fn integration_failure_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path(), 1e308);
    let out = cli(&["--quiet", "run", &config, "--t-final", "5"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("run/manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"failed\""));
}
