//! End-to-end runs of the command-line tool on a tiny configuration.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use sensor_select::experiment::ExperimentConfig;

use common::*;

const TINY: &str = r#"
[model]
mesh_n = 17

[library]
grid_n = 9

[rb]
max_basis = 40

[rb.train]
n_per_dim = 3

[greedy]
k_max = 8

[baselines]
n_sets = 4
k = 8
inflow_min = 2

[evaluation.test]
n_per_dim = 3
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn cli(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensor-select"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .unwrap()
}

fn run_ok(config: &Path, out: &Path, args: &[&str]) -> String {
    let o = cli(config, out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for name in ["desk.cfg", "full.cfg", "desk_identity.cfg"] {
        let cfg = load_config(name);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg, "{name}");
    }
    let full = load_config("full.cfg");
    assert_eq!(full.library.grid_n, 97);
    assert_eq!(full.evaluation.test.n_per_dim, 41);
    assert_eq!((full.noise.sigma, full.greedy.beta_target, full.greedy.k_max), (0.01, 0.5, 16));
    assert_eq!(load_config("desk.cfg").library.grid_n, 25);
}

#[test]
fn step_by_step_pipeline_writes_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    for step in ["build-rb", "select", "baselines", "evaluate"] {
        run_ok(&cfg, &out, &[step]);
    }
    let summary = run_ok(&cfg, &out, &["report"]);
    assert!(summary.contains("spearman"));
    assert!(summary.contains("verdict: greedy"));

    // 2 greedy sets + 4 random + 4 inflow + chebyshev
    assert_eq!(line_count(&out.join("results.csv")), 1 + 11);
    assert_eq!(line_count(&out.join("scatter.csv")), line_count(&out.join("results.csv")));
    assert_eq!(line_count(&out.join("results_full.csv")), 1 + 11 * 9);
    assert_eq!(line_count(&out.join("sensors.csv")), 1 + 81);
    assert_eq!(
        std::fs::read_to_string(out.join("greedy_trace.csv")).unwrap().lines().next().unwrap(),
        "iteration,sensor_index,x1,x2,score,worst_theta_1,worst_theta_2,beta"
    );

    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    for line in results.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (mean_beta, min_beta): (f64, f64) = (f[2].parse().unwrap(), f[4].parse().unwrap());
        assert!(mean_beta >= min_beta);
    }
    let rho: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("spearman(mean_beta, mean_trace): "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((-1.0..=1.0).contains(&rho));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for cmd in ["build-rb", "select", "baselines", "evaluate", "report"] {
        assert_eq!(manifest["commands"][cmd]["status"], "complete", "{cmd}");
    }
    assert_eq!(manifest["commands"]["baselines"]["seeds"]["random"], 20240101);
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok(&cfg, &a, &["run"]);
    run_ok(&cfg, &b, &["run"]);
    for name in ["rb_space.rbs", "rb_certificate.csv", "greedy_trace.csv", "greedy_beta2_trace.csv", "selection.csv",
        "baselines.csv", "results.csv", "results_full.csv", "scatter.csv", "sensor_map.csv", "sensors.csv", "summary.txt"]
    {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    run_ok(&cfg, &c, &["baselines", "--seed", "7"]);
    assert_ne!(std::fs::read(a.join("baselines.csv")).unwrap(), std::fs::read(c.join("baselines.csv")).unwrap());
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    let bad = write_config(tmp.path(), "[library]\ngrid = 3\n");
    assert_eq!(cli(&bad, &out, &["build-rb"]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), &format!("{TINY}\n"));
    run_ok(&cfg, &out, &["build-rb"]);
    let changed = TINY.replace("max_basis = 40", "max_basis = 41");
    let cfg = write_config(tmp.path(), &changed);
    let stale = cli(&cfg, &out, &["select"]);
    assert_eq!(stale.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale"));

    let starved = TINY.replace("max_basis = 40", "max_basis = 2");
    let cfg = write_config(tmp.path(), &starved);
    let failed = cli(&cfg, &tmp.path().join("starved"), &["build-rb"]);
    assert_eq!(failed.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("worst theta"));

    let missing = cli(&cfg, &tmp.path().join("empty"), &["evaluate"]);
    assert_eq!(missing.status.code(), Some(1));
}
