use std::path::Path;
use std::process::{Command, Output};

fn pronyif(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pronyif"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

const TONE: &str = r#"
schema_version = 1

[signal]
snr_db = 20.0
seed = 4

[[signal.modes]]
if_coeffs = [300.0]

[pipeline]
method = "cad-spline"
sigma = 0.025

[sweep]
methods = ["cad", "cad-spline"]
sigmas = [0.025]
realizations = 1
"#;

#[test]
fn generate_estimate_sweep_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), TONE).unwrap();

    let out = pronyif(&["generate", "-c", "run.toml", "-o", "signal.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sig = std::fs::read_to_string(d.join("signal.csv")).unwrap();
    assert_eq!(sig.lines().count(), 1025);
    assert!(sig.starts_with("index,real,imag\n0,"));

    let out = pronyif(&["estimate", "-c", "run.toml", "-i", "signal.csv", "-o", "est"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mode 0: cad-spline E ="));
    for f in [
        "spectrogram.csv",
        "spectrogram.png",
        "raw_tracks.csv",
        "refined.csv",
        "cadzow.csv",
        "point_sets.csv",
        "spline_knots.csv",
        "cells.csv",
    ] {
        assert!(d.join("est").join(f).is_file(), "{f}");
    }
    let refined = std::fs::read_to_string(d.join("est/refined.csv")).unwrap();
    assert!(refined.starts_with("frame,mode,psi_hz\n"));
    let mid: f64 = refined.lines().nth(513).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((mid - 300.0).abs() < 0.5, "{mid}");
    let raw = std::fs::read_to_string(d.join("est/raw_tracks.csv")).unwrap();
    assert!(raw.starts_with("frame,mode,freq_hz,amp,flags\n"));
    let png = std::fs::read(d.join("est/spectrogram.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    let out = pronyif(&["sweep", "-c", "run.toml", "-o", "report.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("cell,")).count(), 2);
    assert_eq!(report.lines().filter(|l| l.starts_with("mean,")).count(), 2);

    let out = pronyif(&["plot", "-i", "report.csv", "-o", "plot.svg"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(d.join("plot.svg")).unwrap();
    assert!(svg.contains("cad-spline") && svg.contains("<polyline"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("v2.toml"), "schema_version = 2\n").unwrap();
    std::fs::write(d.join("bad.toml"), "schema_version = 1\n[pipeline]\nmethod = \"esprit\"\n").unwrap();
    for cfg in ["v2.toml", "bad.toml", "missing.toml"] {
        let out = pronyif(&["estimate", "-c", cfg, "-o", "x"], d);
        assert_eq!(out.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = pronyif(&["sweep", "-c", "bad.toml", "-o", "r.csv"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn refinement_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // A pure noise input leaves no trackable mode.
    let cfg = "schema_version = 1\n[signal]\nsnr_db = -40.0\nseed = 2\n[[signal.modes]]\nif_coeffs = [300.0]\n[pipeline]\noutlier_c = 0.01\n";
    std::fs::write(d.join("noise.toml"), cfg).unwrap();
    let out = pronyif(&["estimate", "-c", "noise.toml", "-o", "x"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
