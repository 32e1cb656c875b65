//! Black-box tests of the `gmh` binary: exit codes, determinism and the
//! shape of the emitted files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gmh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmh"))
        .args(args)
        .output()
        .expect("failed to launch the gmh binary")
}

fn temp_dir(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmh_cli_{label}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const QUICK_RUN: &str = "\
seed       = 11
iterations = 3000
burn_in    = 500

[target]
kind = toy_scalar
data = reference

[sampler]
kind        = adaptive_metropolis
target_rate = 0.44
";

#[test]
fn run_produces_trace_and_summary() {
    let dir = temp_dir("run");
    let config = write_config(&dir, "quick.cfg", QUICK_RUN);
    let out_dir = dir.join("out");
    let out = gmh(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let trace = out_dir.join("quick_chain0.csv");
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,coord_0,log_density,accepted,proposals_evaluated"
    );
    assert_eq!(lines.count(), 3000);
    assert!(out_dir.join("quick_summary.csv").exists());
    assert!(out_dir.join("quick_summary.json").exists());
    // No leftover temp files from the atomic writes.
    assert!(fs::read_dir(&out_dir)
        .unwrap()
        .all(|e| e.unwrap().path().extension().unwrap() != "tmp"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_is_deterministic_under_explicit_seed() {
    let dir = temp_dir("seed");
    let config = write_config(&dir, "quick.cfg", QUICK_RUN);
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.join(sub);
        let out = gmh(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--output",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        bytes.push(fs::read(out_dir.join("quick_chain0.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "--seed 7 twice must be byte-identical");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = temp_dir("badcfg");
    let config = write_config(&dir, "bad.cfg", "seed = 1\nbogus_key = 3\n");
    let out_dir = dir.join("out");
    let out = gmh(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert!(!out_dir.exists(), "no partial outputs on config errors");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_file_exits_3() {
    let out = gmh(&["run", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn summarize_round_trip_and_malformed_trace() {
    let dir = temp_dir("summarize");
    let config = write_config(&dir, "quick.cfg", QUICK_RUN);
    let out_dir = dir.join("out");
    let run = gmh(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(run.status.success());

    let trace = out_dir.join("quick_chain0.csv");
    let sum_dir = dir.join("summary");
    fs::create_dir_all(&sum_dir).unwrap();
    let ok = gmh(&[
        "summarize",
        trace.to_str().unwrap(),
        "--output",
        sum_dir.to_str().unwrap(),
    ]);
    assert!(ok.status.success());
    let summary = fs::read_to_string(sum_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("trace,coordinate,mean,var,tau,ess,acceptance_rate"));
    assert!(summary.lines().count() >= 2);

    // An empty / malformed trace is a runtime failure, not a config error.
    let empty = dir.join("empty.csv");
    fs::write(&empty, "").unwrap();
    let bad = gmh(&[
        "summarize",
        empty.to_str().unwrap(),
        "--output",
        sum_dir.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(3));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn list_samplers_names_every_kind() {
    let out = gmh(&["list-samplers"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "adaptive_metropolis",
        "refresh_v",
        "gibbs",
        "mh_gibbs",
        "auxiliary_gibbs",
        "coordinate_slice",
        "gaussian_slice",
        "directional_slice",
        "elliptical_slice",
        "hamiltonian_slice",
        "hmc",
        "mala",
        "pmmh",
        "pm_hamiltonian_slice",
    ] {
        assert!(text.contains(kind), "missing sampler kind {kind}");
    }
}

#[test]
fn tune_particles_reports_a_count() {
    let dir = temp_dir("tune");
    let config = write_config(
        &dir,
        "pm.cfg",
        "\
seed       = 5
iterations = 100

[target]
kind         = lgssm_toy
data         = simulate
horizon      = 20
true_upsilon = 0.0
data_seed    = 42

[sampler]
kind      = pmmh
particles = 16
",
    );
    let out = gmh(&["tune-particles", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let n: usize = text
        .trim()
        .strip_prefix("particles: ")
        .expect("output shape")
        .parse()
        .unwrap();
    assert!(n >= 2);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn tune_particles_rejects_non_pseudo_marginal_configs() {
    let dir = temp_dir("tunebad");
    let config = write_config(&dir, "quick.cfg", QUICK_RUN);
    let out = gmh(&["tune-particles", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(&dir);
}
