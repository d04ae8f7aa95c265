use std::path::PathBuf;
use std::process::Command;

use gmfilter_cli::{demo_sample, run, RunConfig, Task};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs().join(name)).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmfilter"))
}

#[test]
fn expand_reports_second_difference() {
    let mut c = RunConfig::from_json(r#"{"increment": {"mu": [1], "s": [1], "d": [2], "t": 1}}"#).unwrap();
    c.task = Some(Task::Expand);
    let r = run(&c).unwrap();
    assert_eq!(r.e_gamma, vec![1, -2, 1]);
    assert_eq!(r.n_gamma, 2);
}

#[test]
fn benchmark_filter_paths_agree() {
    let mut c = load("benchmark.json");
    c.task = Some(Task::Filter);
    let r = run(&c).unwrap();
    let (a, b) = (r.delta_fact.unwrap(), r.delta_fourier.unwrap());
    assert!((a - b).abs() <= 1e-6 * a, "{a} {b}");
    assert_eq!(r.h_table.len(), 2048);
    assert_eq!(r.tolerances["cross_path_relative"], 1e-6);
}

#[test]
fn reports_are_deterministic() {
    let mut c = load("benchmark.json");
    c.task = Some(Task::Report);
    let a = run(&c).unwrap().to_json();
    let b = run(&c).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn oracle_rows_follow_windows() {
    let mut c = load("seasonal_pair.json");
    c.task = Some(Task::Oracle);
    let r = run(&c).unwrap();
    let ws: Vec<usize> = r.delta_oracle.iter().map(|o| o.w_obs).collect();
    assert_eq!(ws, vec![32, 64, 128, 256]);
    assert!(r.delta_oracle.windows(2).all(|w| w[1].delta <= w[0].delta * (1.0 + 1e-12)));
}

#[test]
fn semi_uncertain_minimax_section() {
    let mut c = load("semi_uncertain.json");
    c.task = Some(Task::Minimax);
    let r = run(&c).unwrap();
    let m = r.minimax.unwrap();
    assert!((m.delta0 - 0.44333569415).abs() < 1e-8, "{}", m.delta0);
    assert_eq!(m.noise_family, "known");
    assert!(m.saddle.right_margin.unwrap() >= -1e-6);
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
}

#[test]
fn missing_density_names_the_key() {
    let mut c = load("benchmark.json");
    c.densities.remove("g");
    c.task = Some(Task::Filter);
    let err = run(&c).unwrap_err();
    assert!(err.to_string().contains("densities.g"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sampler_is_seeded() {
    let c = load("benchmark.json");
    let a = demo_sample(&c, 11, 50).unwrap();
    let b = demo_sample(&c, 11, 50).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    let other = demo_sample(&c, 12, 50).unwrap();
    assert_ne!(a.rows, other.rows);
    let empty = demo_sample(&c, 11, 0).unwrap();
    assert!(empty.rows.is_empty() && empty.empirical_cov0.is_none());
}

#[test]
fn sampler_variance_is_close_to_model() {
    let mut c = RunConfig::from_json(
        r#"{"increment": {"mu": [1], "s": [1], "d": [1]}, "grid": {"size": 1024}, "truncation": {"l": 64},
            "densities": {"f": {"kind": "constant", "value": 1.0, "increment_scaled": true},
                          "g": {"kind": "constant", "value": 0.0}}}"#,
    )
    .unwrap();
    c.truncation.l = 64;
    let s = demo_sample(&c, 3, 100_000).unwrap();
    let model = s.model_cov0[0][0];
    let emp = s.empirical_cov0.unwrap()[0][0];
    assert!((emp - model).abs() <= 0.05 * model, "{emp} vs {model}");
}

#[test]
fn binary_exit_codes() {
    let out = bin().args(["expand", "--config"]).arg(configs().join("benchmark.json")).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["e_gamma"], serde_json::json!([1, -1]));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"increment": {"mu": [1], "s": [1], "d": [1]}, "functional": {"scalar": [1]}}"#).unwrap();
    let out = bin().args(["filter", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("densities.f"));

    let infeasible = dir.path().join("infeasible.json");
    std::fs::write(
        &infeasible,
        r#"{"increment": {"mu": [1], "s": [1], "d": [1]}, "grid": {"size": 256},
            "densities": {"f1": {"kind": "constant", "value": 1.0}, "g": {"kind": "constant", "value": 1.0}},
            "functional": {"scalar": [1]},
            "minimax": {"signal": {"moment": {"kind": "trace", "value": 0.1},
                                   "contamination": {"f1": "f1", "eps": 0.0}},
                        "noise": {"kind": "known", "density": "g"}}}"#,
    )
    .unwrap();
    let out = bin().args(["minimax", "--config"]).arg(&infeasible).output().unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().arg("expand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_output_has_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let status = bin()
        .args(["filter", "--format", "csv", "--grid-size", "256", "--truncation", "64", "--config"])
        .arg(configs().join("seasonal_pair.json"))
        .arg("--output")
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ["lambda", "re_0", "im_0", "re_1", "im_1"]);
    assert_eq!(reader.records().count(), 256);
}
