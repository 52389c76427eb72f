//! End-to-end tests for the gridswing binary: exit codes, artifacts,
//! config-file handling.

use std::path::Path;
use std::process::{Command, Output};

use gridswing::grid::synth_two_cluster;
use gridswing::io::write_grid_dir;

fn gridswing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridswing"))
        .args(args)
        .output()
        .expect("spawn gridswing")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn structural_inputs(dir: &Path) {
    write(
        &dir.join("buses.csv"),
        "id,kind,voltage_kv,lat,lon\n\
         1,generator,380,47.0,8.0\n\
         2,load,220,47.2,8.3\n\
         3,load,220,47.4,8.1\n",
    );
    write(
        &dir.join("lines.csv"),
        "from,to,length_km,voltage_kv,susceptance_S\n\
         1,2,40,380,\n\
         2,3,25,220,\n",
    );
    write(
        &dir.join("generators.csv"),
        "bus_id,technology,rated_power_MW,H_s,cost_per_MWh\n\
         1,nuclear,900,,\n",
    );
}

#[test]
fn build_structural_grid() {
    let tmp = tempfile::tempdir().unwrap();
    structural_inputs(tmp.path());
    let out = tmp.path().join("out");
    let result = gridswing(&[
        "build",
        "--buses",
        tmp.path().join("buses.csv").to_str().unwrap(),
        "--lines",
        tmp.path().join("lines.csv").to_str().unwrap(),
        "--generators",
        tmp.path().join("generators.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in [
        "grid_buses.csv",
        "grid_lines.csv",
        "grid_meta.csv",
        "resolved_config.toml",
        "manifest.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    let files = manifest["files"].as_object().unwrap();
    assert!(files.contains_key("grid_buses.csv"));
    // SHA-256 hex digests.
    for digest in files.values() {
        assert_eq!(digest.as_str().unwrap().len(), 64);
    }
}

#[test]
fn build_rejects_bad_bus_kind() {
    let tmp = tempfile::tempdir().unwrap();
    structural_inputs(tmp.path());
    write(
        &tmp.path().join("buses.csv"),
        "id,kind,voltage_kv,lat,lon\n1,reactor,380,47.0,8.0\n",
    );
    let result = gridswing(&[
        "build",
        "--buses",
        tmp.path().join("buses.csv").to_str().unwrap(),
        "--lines",
        tmp.path().join("lines.csv").to_str().unwrap(),
        "--generators",
        tmp.path().join("generators.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("input error"), "stderr: {stderr}");
}

#[test]
fn build_rejects_partial_demographic_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    structural_inputs(tmp.path());
    write(&tmp.path().join("towns.csv"), "country,lat,lon,population\n");
    let result = gridswing(&[
        "build",
        "--buses",
        tmp.path().join("buses.csv").to_str().unwrap(),
        "--lines",
        tmp.path().join("lines.csv").to_str().unwrap(),
        "--generators",
        tmp.path().join("generators.csv").to_str().unwrap(),
        "--towns",
        tmp.path().join("towns.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

/// Synthetic balanced grid written in the canonical directory layout,
/// usable by fault, spectral and sweep.
fn synthetic_grid_dir(dir: &Path) -> gridswing::grid::GridModel {
    let grid = synth_two_cluster(4, 1.0, 0.5, 5).unwrap();
    write_grid_dir(dir, &grid).unwrap();
    grid
}

#[test]
fn fault_produces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let grid_dir = tmp.path().join("grid");
    std::fs::create_dir_all(&grid_dir).unwrap();
    let grid = synthetic_grid_dir(&grid_dir);
    let fault_bus = grid
        .buses
        .iter()
        .find(|b| b.power_setpoint_w > 0.0)
        .unwrap()
        .id
        .to_string();
    let out = tmp.path().join("out");
    let result = gridswing(&[
        "fault",
        "--grid",
        grid_dir.to_str().unwrap(),
        "--bus",
        &fault_bus,
        "--delta-p",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("M_b = "), "stdout: {stdout}");
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("rocof.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["m_b"].as_f64().unwrap() > 0.0);
    // Default timing: 10 intervals, one frame per interval.
    let frames = std::fs::read_dir(out.join("frames")).unwrap().count();
    assert_eq!(frames, 10);
}

#[test]
fn fault_unknown_bus_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let grid_dir = tmp.path().join("grid");
    std::fs::create_dir_all(&grid_dir).unwrap();
    synthetic_grid_dir(&grid_dir);
    let result = gridswing(&[
        "fault",
        "--grid",
        grid_dir.to_str().unwrap(),
        "--bus",
        "9999",
        "--delta-p",
        "0.1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn spectral_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let grid_dir = tmp.path().join("grid");
    std::fs::create_dir_all(&grid_dir).unwrap();
    synthetic_grid_dir(&grid_dir);
    let out = tmp.path().join("out");
    write(
        &tmp.path().join("run.toml"),
        &format!(
            "[spectral]\ngrid = {:?}\nmodes = 4\nm = 1.0\nd = 0.1\nout = {:?}\n",
            grid_dir.to_str().unwrap(),
            out.to_str().unwrap()
        ),
    );
    let result = gridswing(&[
        "spectral",
        "--config",
        tmp.path().join("run.toml").to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let modes = std::fs::read_to_string(out.join("modes.csv")).unwrap();
    assert!(modes.starts_with("eigenvalue"));
    assert!(out.join("timescales.csv").exists());
    assert!(out.join("resolved_config.toml").exists());

    // A command-line flag overrides the config file value.
    let out2 = tmp.path().join("out2");
    let result = gridswing(&[
        "spectral",
        "--config",
        tmp.path().join("run.toml").to_str().unwrap(),
        "--modes",
        "2",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let header = std::fs::read_to_string(out2.join("modes.csv")).unwrap();
    let cols = header.lines().next().unwrap().split(',').count();
    assert_eq!(cols, 3, "eigenvalue row should list 2 modes: {header}");
}

#[test]
fn config_file_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    write(&tmp.path().join("run.toml"), "[spectral]\ngird = \"x\"\n");
    let result = gridswing(&[
        "spectral",
        "--config",
        tmp.path().join("run.toml").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}
