//! End-to-end tests of the binary: exit codes, file outputs, determinism,
//! and config round-tripping.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semiclassical"))
}

fn workspace_config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn propagate_free_particle_matches_closed_form() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "--config",
            &workspace_config("free_particle.toml"),
            "--out",
            out.path().to_str().unwrap(),
            "propagate",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let csv = read(out.path(), "free_field.csv");
    let packet = semiclassical::packet::GaussianPacket::scalar_1d(0.0, 1.0, 0.5, 0.1, 1.0, 1.0);
    let mut totals = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] != "total" {
            continue;
        }
        totals += 1;
        let x: f64 = cols[0].parse().unwrap();
        let re: f64 = cols[4].parse().unwrap();
        let im: f64 = cols[5].parse().unwrap();
        let exact = semiclassical::oracle::free_gaussian_evolution(&packet, x, 1.0);
        let err = (num_complex::Complex64::new(re, im) - exact).norm() / exact.norm();
        assert!(err < 1e-9, "x = {x}: rel err {err}");
    }
    assert_eq!(totals, 200);
}

#[test]
fn byte_identical_outputs_for_same_config_and_seed() {
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    for out in [&out1, &out2] {
        let status = bin()
            .args([
                "--config",
                &workspace_config("free_particle.toml"),
                "--out",
                out.path().to_str().unwrap(),
                "--seed",
                "42",
                "propagate",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["free_field.csv", "free_summary.json", "free_config.toml"] {
        assert_eq!(
            read(out1.path(), name),
            read(out2.path(), name),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn effective_config_echo_round_trips() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "--config",
            &workspace_config("harmonic.toml"),
            "--out",
            out.path().to_str().unwrap(),
            "propagate",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let original = std::fs::read_to_string(workspace_config("harmonic.toml")).unwrap();
    let echoed = read(out.path(), "harmonic_config.toml");
    let a: toml::Value = toml::from_str(&original).unwrap();
    let b: toml::Value = toml::from_str(&echoed).unwrap();
    // the echo carries defaults filled in; every original key must round-trip
    fn subset(a: &toml::Value, b: &toml::Value, path: &str) {
        match (a, b) {
            (toml::Value::Table(ta), toml::Value::Table(tb)) => {
                for (k, va) in ta {
                    let vb = tb.get(k).unwrap_or_else(|| panic!("missing {path}.{k}"));
                    subset(va, vb, &format!("{path}.{k}"));
                }
            }
            _ => assert_eq!(a, b, "value mismatch at {path}"),
        }
    }
    subset(&a, &b, "config");
}

#[test]
fn unsupported_combination_rejected_at_parse_time() {
    let out = tempfile::tempdir().unwrap();
    let cfg = r#"
[potential]
kind = "harmonic"
dimension = 2
spring = 1.0

[packet]
x0 = [0.0, 0.0]
p0 = [0.0, 0.0]
a0 = [0.5, 0.5]
a1 = [0.0, 0.0]
hbar = 1.0
mass = 1.0

[run]
method = "wkb"
order = 3
time = 1.0
targets_start = [0.0, 0.0]
targets_stop = [1.0, 1.0]
targets_count = [3, 3]
"#;
    let cfg_path = out.path().join("bad.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let output = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "propagate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("supported (method, order, dimension)"),
        "stderr should list the allowed matrix: {stderr}"
    );
}

#[test]
fn time_zero_returns_initial_packet() {
    let out = tempfile::tempdir().unwrap();
    let cfg = r#"
[potential]
kind = "harmonic"
dimension = 1
spring = 1.0

[packet]
x0 = [0.0]
p0 = [0.5]
a0 = [0.5]
a1 = [0.0]
hbar = 1.0
mass = 1.0

[run]
method = "wkb"
order = 1
time = 1e-12
targets_start = [-1.0]
targets_stop = [1.0]
targets_count = [9]

[search]
grid = 2

[output]
prefix = "tzero"
"#;
    let cfg_path = out.path().join("tzero.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let status = bin()
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "propagate",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(out.path(), "tzero_field.csv");
    let packet = semiclassical::packet::GaussianPacket::scalar_1d(0.0, 0.5, 0.5, 0.0, 1.0, 1.0);
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] != "total" {
            continue;
        }
        let x: f64 = cols[0].parse().unwrap();
        let got = num_complex::Complex64::new(cols[4].parse().unwrap(), cols[5].parse().unwrap());
        let exact = packet.psi0(&[num_complex::Complex64::new(x, 0.0)]);
        assert!((got - exact).norm() < 1e-7, "x = {x}");
    }
}

#[test]
fn checks_stirling_and_branches_dump() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "--config",
            &workspace_config("quartic.toml"),
            "--out",
            out.path().to_str().unwrap(),
            "checks",
            "stirling",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(out.path(), "quartic_checks.json")).unwrap();
    assert_eq!(report["all_pass"], serde_json::json!(true));

    let status = bin()
        .args([
            "--config",
            &workspace_config("free_particle.toml"),
            "--out",
            out.path().to_str().unwrap(),
            "branches",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let dump: serde_json::Value =
        serde_json::from_str(&read(out.path(), "free_branches.json")).unwrap();
    let targets = dump["targets"].as_array().unwrap();
    assert_eq!(targets.len(), 200);
    // the free particle has exactly one branch everywhere
    for t in targets {
        assert_eq!(t["branches"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn propagator_reports_closed_form_agreement() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "--config",
            &workspace_config("propagator_free.toml"),
            "--out",
            out.path().to_str().unwrap(),
            "propagator",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(out.path(), "prop_propagator.json")).unwrap();
    let rel = report["closed_form_rel_err"].as_f64().unwrap();
    assert!(rel < 1e-10, "closed-form disagreement {rel}");
}

#[test]
fn numerical_failure_exits_two() {
    // oracle bounds too tight for the packet -> PacketOutOfBounds, exit 2
    let out = tempfile::tempdir().unwrap();
    let cfg = r#"
[potential]
kind = "free"
dimension = 1

[packet]
x0 = [0.0]
p0 = [0.0]
a0 = [0.5]
a1 = [0.0]
hbar = 1.0
mass = 1.0

[run]
method = "wkb"
order = 1
time = 0.5
targets_start = [-1.0]
targets_stop = [1.0]
targets_count = [5]

[search]
grid = 2

[oracle]
lo = [-3.0]
hi = [3.0]
points = [256]
steps = 100
"#;
    let cfg_path = out.path().join("tight.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let output = bin()
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "compare",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn missing_config_exits_one() {
    let output = bin()
        .args(["--config", "/nonexistent/config.toml", "propagate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}
