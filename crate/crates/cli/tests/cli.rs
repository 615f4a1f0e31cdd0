use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stefan-flame"))
}

#[test]
fn run_preset_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "three_species_oracle", "--t-end", "0.02", "--dt", "0.005", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("steps 4"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(dir.path().join("snapshot_000000.vtk").exists());
    assert!(dir.path().join("snapshot_000004.vtk").exists());
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let printed = bin().args(["run", "binary_fick", "--print-config", "--t-end", "0.001"]).output().unwrap();
    assert!(printed.status.success());
    let cfg = dir.path().join("case.toml");
    std::fs::write(&cfg, &printed.stdout).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg(&cfg).arg("--output-dir").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("timeseries.csv").exists());
}

#[test]
fn bad_input_exits_with_error() {
    let out = bin().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["verify", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "diffusion_box", "--dt", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_single_suite() {
    let out = bin().args(["verify", "oracle"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("[PASS]  1 oracle"), "{stdout}");
}
