//! End-to-end runs of the `modeflux` binary: outputs, manifests and exit
//! statuses.

use std::path::{Path, PathBuf};
use std::process::Command;

use modeflux::config::parse_config;
use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_modeflux");

/// A five-mode guide narrowing to three modes; `sigma` is substituted.
fn small_guide(sigma: f64) -> String {
    format!(
        r#"
[geometry]
z_m = 450.0

[geometry.profile]
kind = "piecewise-linear"
z = [-400.0, 0.0]
d = [1.9, 2.6]

[physics]
k = 6.283185307179586
sigma = {sigma}
epsilon = 0.01
correlation_length = 1.0

[source]
rho_fraction = 0.2

[numerics]
delta = 5.0
output_points = 50
"#
    )
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

fn run(sub: &str, config: Option<&Path>, out: &Path, extra: &[&str]) -> i32 {
    let mut cmd = Command::new(BIN);
    cmd.arg(sub).arg("--out").arg(out).args(extra);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs").status.code().expect("exit status")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn layout_of_the_preset_and_manifest_round_trip() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run("layout", Some(&preset("narrowing-point-source.cfg")), out.path(), &[]), 0);
    let sectors = std::fs::read_to_string(out.path().join("sectors.csv")).unwrap();
    let rows: Vec<&str> = sectors.lines().collect();
    assert_eq!(rows[0], "side,index,z_left,z_right,n_modes");
    assert!(rows[1].starts_with("left,0,") && rows[1].ends_with(",40"), "{}", rows[1]);
    assert!(rows[2].starts_with("left,1,") && rows[2].ends_with(",39"), "{}", rows[2]);

    let manifest = read_json(&out.path().join("manifest.json"));
    let text = manifest["config"].as_str().unwrap();
    let hash: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), hash);
    assert_eq!(manifest["kappa_sigma2_in_propagating_sum"], Value::Bool(true));
    let reparsed = parse_config(text).unwrap();
    assert_eq!(reparsed.to_text().unwrap(), text);
    assert_eq!(manifest["results"]["n0"], 40);

    // The embedded configuration reproduces the run.
    let again = tempfile::tempdir().unwrap();
    let cfg = write_config(again.path(), text);
    assert_eq!(run("layout", Some(&cfg), again.path(), &[]), 0);
    assert_eq!(std::fs::read_to_string(again.path().join("sectors.csv")).unwrap(), sectors);
}

#[test]
fn validate_passes_without_a_config() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run("validate", None, out.path(), &[]), 0);
    let v = read_json(&out.path().join("validate.json"));
    assert_eq!(v["pass"], Value::Bool(true));
    assert!(v["max_residual"].as_f64().unwrap() < 1e-9);
    assert!(out.path().join("identities.csv").exists());
}

#[test]
fn noise_free_transport_keeps_every_mode_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_guide(0.0));
    assert_eq!(run("transport", Some(&cfg), dir.path(), &[]), 0);
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["balance"]["relative_residual"].as_f64().unwrap().abs() < 1e-10);

    let mut reader = csv::Reader::from_path(dir.path().join("powers.csv")).unwrap();
    let mut first = std::collections::HashMap::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let (side, sector, j): (String, usize, usize) = (rec[0].into(), rec[2].parse().unwrap(), rec[3].parse().unwrap());
        let p: f64 = rec[4].parse().unwrap();
        let p0 = *first.entry((side, sector, j)).or_insert(p);
        assert!((p - p0).abs() <= 1e-12 * p0.max(1e-300), "power of mode {j} changed in sector {sector}: {p0} -> {p}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn coefficients_and_transport_on_a_scattering_guide() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_guide(0.3));
    assert_eq!(run("coefficients", Some(&cfg), dir.path(), &[]), 0);
    let coeffs = read_json(&dir.path().join("coefficients.json"));
    let sectors = coeffs["sectors"].as_array().unwrap();
    assert_eq!(sectors.iter().map(|s| s["n_prop"].as_u64().unwrap()).collect::<Vec<_>>(), vec![5, 4, 3]);
    for s in sectors {
        assert!(s["l_eq"].as_f64().unwrap() > 0.0);
    }

    assert_eq!(run("transport", Some(&cfg), dir.path(), &[]), 0);
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["balance"]["relative_residual"].as_f64().unwrap().abs() < 1e-8);
    let header = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert!(header.starts_with("side,z,sector,j,l,second_moment"));
}

#[test]
fn montecarlo_command_writes_ensemble_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("montecarlo", Some(&preset("toy-montecarlo.cfg")), dir.path(), &["--trajectories", "200", "--seed", "5"]), 0);
    let compare = read_json(&dir.path().join("compare.json"));
    assert_eq!(compare["n_trajectories"], 200);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["seeds"]["seed"], 5);
    let ensemble = std::fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    assert_eq!(ensemble.lines().count(), 1 + 10 * 5);
}

#[test]
fn input_errors_exit_with_status_one_and_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &small_guide(0.3).replace("epsilon = 0.01", "epsilon = 0.01\nepsilom = 0.02"));
    assert_eq!(run("transport", Some(&bad), dir.path(), &[]), 1);
    let err = read_json(&dir.path().join("error.json"));
    assert_eq!(err["exit_status"], 1);
    assert!(err["message"].as_str().unwrap().contains("epsilom"));

    let missing = tempfile::tempdir().unwrap();
    assert_eq!(run("layout", Some(&missing.path().join("absent.cfg")), missing.path(), &[]), 1);
    assert_eq!(run("layout", None, missing.path(), &[]), 1);

    let outside = tempfile::tempdir().unwrap();
    let cfg = write_config(outside.path(), &small_guide(0.3).replace("rho_fraction = 0.2", "rho_star = 3.0"));
    assert_eq!(run("transport", Some(&cfg), outside.path(), &[]), 1);
}
