//! End-to-end checks of the command-line interface and its exit codes.

use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const CONFIG: &str = r#"
[wave]
s = 1.0
eps = 0.05

[grid]
l_z = 12.0
nz = 128
lambda = 0.3
ny = 8

[scheme]
dt = 0.01
t_end = 0.2
snapshot_stride = 10

[perturbation]
family = "gaussian_bump"
amplitude = 1e-3
sigma_z = 1.5

[run]
formulation = "perturbation"
"#;

fn kswave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kswave"))
}

#[test]
fn wave_verb_exports_profile() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let output = kswave()
        .args(["wave", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out_dir.join("profile.csv").exists());
    assert!(out_dir.join("profile.meta.json").exists());
    let text = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn run_verb_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let output = kswave()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for file in ["energy.csv", "summary.json", "run.meta", "snap_000000.fld"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
}

#[test]
fn check_and_poincare_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let status = kswave()
        .args(["check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("o1"))
        .status()
        .unwrap();
    assert!(status.success());

    let output = kswave()
        .args(["poincare", "--lambda", "0.3", "--ny", "32", "--s", "1.0"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(text.contains("0.159154943"), "battery output: {text}");
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("eps = 0.05", "eps = 0.05\nbogus = 1"));
    let status = kswave()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn strict_mode_rejects_smallness_violation() {
    let dir = tempfile::tempdir().unwrap();
    // lambda above the admissible range for s = 1
    let config = write_config(dir.path(), &CONFIG.replace("lambda = 0.3", "lambda = 0.6"));
    let relaxed = kswave()
        .args(["check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("o1"))
        .status()
        .unwrap();
    assert!(relaxed.success());
    let strict = kswave()
        .args(["check", "--strict", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("o2"))
        .status()
        .unwrap();
    assert_eq!(strict.code(), Some(4));
}

#[test]
fn blow_up_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // enormous amplitude on a short run
    let config = write_config(
        dir.path(),
        &CONFIG
            .replace("amplitude = 1e-3", "amplitude = 1e5")
            .replace("t_end = 0.2", "t_end = 2.0"),
    );
    let status = kswave()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn sweep_verb_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{CONFIG}\n[sweep]\naxis = \"eps\"\nvalues = [0.05, 0.1]\n"),
    );
    let out_dir = dir.path().join("sweep");
    let status = kswave()
        .args(["sweep", "--workers", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("sweep.csv").exists());
    assert!(out_dir.join("sweep_summary.json").exists());
    assert!(out_dir.join("point_001/summary.json").exists());
}
