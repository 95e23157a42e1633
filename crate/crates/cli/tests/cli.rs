use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graphon(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphon"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GRAPHON_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(
        &path,
        "# two metastable blocks\ngraphon = two-block(0.8,0.2)\nn = 10\nsigma = 0.1\nm = 4000\nseed = 3\noutput = out\n",
    )
    .unwrap();
    path
}

#[test]
fn run_then_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = graphon(&["run", "-c", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("out");
    for f in ["manifest.json", "spectrum.csv", "clusters.csv", "transitions.csv", "matrices/K.csv", "reconstruction_w.csv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let out = graphon(&["plotdata", "out"], dir.path());
    assert!(out.status.success());
    assert!(run.join("plot/functions.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = graphon(
        &["analyze", "-c", cfg.to_str().unwrap(), "--seed", "11", "--set", "r=2", "-o", "other"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.path().join("other/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 11"));
    assert!(!dir.path().join("other/reconstruction_p.csv").exists());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let target = dir.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_graphon"))
        .args(["simulate", "-c", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("GRAPHON_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("trajectory.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn ingest_signal_by_column_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,value\n");
    for i in 0..50 {
        csv.push_str(&format!("d{i},{}\n", -40.0 + i as f64));
    }
    fs::write(dir.path().join("temps.csv"), csv).unwrap();
    let out = graphon(&["ingest", "--signal", "temps.csv", "--column", "value", "-o", "ing"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scaling = fs::read_to_string(dir.path().join("ing/signal.json")).unwrap();
    assert!(scaling.contains("-40"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Two data sources.
    let out = graphon(&["run", "--graphon", "bipartite", "--set", "signal=x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // Constant series is a data error, recorded in the manifest.
    let csv: String = std::iter::once("v\n".to_string()).chain((0..20).map(|_| "5\n".to_string())).collect();
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let out = graphon(&["run", "--signal", "flat.csv", "-o", "flat"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let manifest = fs::read_to_string(dir.path().join("flat/manifest.json")).unwrap();
    assert!(manifest.contains("\"exit_code\": 3"));
    // Empty indicator bins with ε = 0 leave C_xx singular: numeric failure.
    let out = graphon(
        &["run", "--graphon", "constant(0.5)", "--set", "dictionary=indicator", "--set", "epsilon=0", "-n", "200", "-m", "100"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn manifest_rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(graphon(&["run", "-c", cfg.to_str().unwrap()], dir.path()).status.success());
    let out = graphon(&["run", "--manifest", "out/manifest.json", "-o", "again"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["spectrum.csv", "clusters.csv"] {
        assert_eq!(
            fs::read(dir.path().join("out").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
}
