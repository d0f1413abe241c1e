//! End-to-end checks of the command-line pipeline on a small model.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_freqmor")
}

fn write_tiny_config(dir: &Path, out_name: &str) -> PathBuf {
    let text = format!(
        r#"
[model]
name = "heat_symmetric"
grid_n = 6

[frequency]
min = 1e-1
max = 1e2
count = 6
spacing = "log"

[[parameter]]
min = 0.5
max = 3.5
count = 3

[[parameter]]
min = 0.0
max = 2.0
count = 3

[scm]
method = "scm"
epsilon = 0.8
m_alpha = 20

[greedy]
max_basis = 3
tol = 1e-12

[realify]
tau = 1e-2

[output]
dir = "{}"
seed = 3
"#,
        dir.join(out_name).display()
    );
    let path = dir.join(format!("{out_name}.cfg"));
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn pipeline_artifacts_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path(), "run_a");
    let cfg_s = cfg.to_str().unwrap();

    // staged: scm-train then reduce must reuse the stability artifact
    run_ok(&["scm-train", "--config", cfg_s]);
    let out_a = tmp.path().join("run_a");
    assert!(out_a.join("scm_model.bin").exists());
    run_ok(&["reduce", "--config", cfg_s]);
    for artifact in [
        "scm_model.bin",
        "stability_grid.csv",
        "greedy_trace.csv",
        "basis_complex.mtx",
        "basis_real.mtx",
        "bode_grid.csv",
        "manifest.json",
    ] {
        assert!(out_a.join(artifact).exists(), "missing {artifact}");
    }
    assert!(out_a.join("reduced_lti").join("manifest.json").exists());

    // single shot into a fresh directory gives a bit-identical trace
    let cfg_b = write_tiny_config(tmp.path(), "run_b");
    run_ok(&["reduce", "--config", cfg_b.to_str().unwrap()]);
    let trace_a = std::fs::read(out_a.join("greedy_trace.csv")).unwrap();
    let trace_b = std::fs::read(tmp.path().join("run_b").join("greedy_trace.csv")).unwrap();
    assert_eq!(trace_a, trace_b, "staged and single-shot traces differ");

    // manifest echoes the config
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["model"]["name"], "heat_symmetric");
    assert_eq!(manifest["config"]["scm"]["epsilon"], 0.8);
    assert_eq!(manifest["state_dim"], 36);

    // bode on stored artifacts and the oracle sweep both succeed
    let bode_out = run_ok(&["bode", "--config", cfg_s]);
    assert!(bode_out.contains("max rel err"));
    let oracle_out = run_ok(&["oracle", "--config", cfg_s, "--samples", "30"]);
    assert!(oracle_out.contains("0 sandwich violations"), "{oracle_out}");

    // time-domain check produces trajectories and a bound report
    run_ok(&["simulate", "--config", cfg_s, "--inputs", "1"]);
    assert!(out_a.join("sim_0.csv").exists());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_a.join("bound_report_0.json")).unwrap(),
    )
    .unwrap();
    let lhs = report["lhs_l2_error"].as_f64().unwrap();
    let rhs = report["rhs_real_basis"].as_f64().unwrap();
    assert!(lhs.is_finite() && rhs.is_finite());
}

#[test]
fn missing_artifacts_name_the_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path(), "empty_run");
    let out = Command::new(bin())
        .args(["bode", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("basis_real.mtx") && err.contains("reduce"),
        "unhelpful error: {err}"
    );
}

#[test]
fn bundled_configs_match_reported_setups() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let sym = std::fs::read_to_string(root.join("symmetric.cfg")).unwrap();
    let sym: toml::Value = toml::from_str(&sym).unwrap();
    assert_eq!(sym["frequency"]["count"].as_integer(), Some(50));
    assert_eq!(sym["frequency"]["spacing"].as_str(), Some("log"));
    assert_eq!(sym["parameter"][0]["count"].as_integer(), Some(20));
    assert_eq!(sym["parameter"][1]["count"].as_integer(), Some(20));
    assert_eq!(sym["scm"]["method"].as_str(), Some("scm"));
    assert_eq!(sym["scm"]["epsilon"].as_float(), Some(0.8));
    assert_eq!(sym["scm"]["m_alpha"].as_integer(), Some(20));

    let penzl = std::fs::read_to_string(root.join("penzl.cfg")).unwrap();
    let penzl: toml::Value = toml::from_str(&penzl).unwrap();
    let edges = penzl["edges"]["values"].as_array().unwrap();
    assert_eq!(edges.len(), 20);
    assert_eq!(edges[0].as_float(), Some(0.0));
    assert_eq!(edges[3].as_float(), Some(50.0));
    assert_eq!(edges[19].as_float(), Some(1e3));
    assert_eq!(penzl["scm"]["epsilon"].as_float(), Some(0.6));
    assert_eq!(penzl["scm"]["epsilon_beta"].as_float(), Some(0.99));
    assert_eq!(penzl["scm"]["inside"].as_bool(), Some(true));
    assert_eq!(penzl["scm"]["phi"].as_float(), Some(0.0));

    let frac = std::fs::read_to_string(root.join("fractional.cfg")).unwrap();
    let frac: toml::Value = toml::from_str(&frac).unwrap();
    assert_eq!(frac["scm"]["epsilon"].as_float(), Some(0.4));
    assert_eq!(frac["scm"]["epsilon_beta"].as_float(), Some(0.9999));
    assert_eq!(frac["parameter"][0]["count"].as_integer(), Some(20));
    assert_eq!(frac["parameter"][0]["min"].as_float(), Some(0.05));
    assert_eq!(frac["parameter"][0]["max"].as_float(), Some(1.0));

    let vd = std::fs::read_to_string(root.join("vanishing_diffusion.cfg")).unwrap();
    let vd: toml::Value = toml::from_str(&vd).unwrap();
    assert_eq!(vd["scm"]["epsilon"].as_float(), Some(0.8));
    assert_eq!(vd["scm"]["epsilon_beta"].as_float(), Some(0.9999));
    assert_eq!(vd["edges"]["count"].as_integer(), Some(6));
    assert_eq!(vd["parameter"][0]["count"].as_integer(), Some(10));
}

#[test]
fn stage_flag_stops_early() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path(), "staged");
    run_ok(&["reduce", "--config", cfg.to_str().unwrap(), "--stage", "greedy"]);
    let out = tmp.path().join("staged");
    assert!(out.join("basis_complex.mtx").exists());
    assert!(!out.join("basis_real.mtx").exists());
    assert!(!out.join("bode_grid.csv").exists());
}
