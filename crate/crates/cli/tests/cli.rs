use std::path::Path;
use std::process::{Command, Output};

use hyperwass_cli::REPORT_SCHEMA;

const SMALL: &str = r#"
[process]
family = "poisson"

[experiment]
dimension = 2
n = [16, 64, 256]
p = [1.0, 2.0]
replicates = 10
seed = 11
semidiscrete_max_points = 300

[moments]
areas = [1.0, 4.0, 16.0, 64.0]
windows = 16
replicates = 4
envelope = "power"
"#;

fn hyperwass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperwass"))
        .args(args)
        .env("HYPERWASS_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn scaling(dir: &Path, config: &str, out: &str) -> Output {
    let out_dir = dir.join(out);
    hyperwass(&["scaling", "--config", config, "--jobs", "2", "--out", out_dir.to_str().unwrap()])
}

#[test]
fn scaling_artifacts_validate_and_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let first = scaling(tmp.path(), &cfg, "a");
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = scaling(tmp.path(), &cfg, "b");
    assert!(second.status.success());

    for name in ["report.json", "results.csv", "scaling.svg"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }

    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("a/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    if let Err(errors) = compiled.validate(&report) {
        let all: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {all:#?}");
    }
    assert_eq!(report["series"].as_array().unwrap().len(), 2);

    let csv = std::fs::read_to_string(tmp.path().join("a/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    let summary = hyperwass(&["report", "--input", tmp.path().join("a/report.json").to_str().unwrap()]);
    assert!(summary.status.success());
    assert!(String::from_utf8_lossy(&summary.stdout).contains("slope"));
}

#[test]
fn a_broken_report_is_not_schema_valid() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let bogus = serde_json::json!({ "version": 1, "series": "nope" });
    assert!(!compiled.is_valid(&bogus));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("p = [1.0, 2.0]", "p = [2.0]").replace("[moments]", "[ignored]");
    let text = text[..text.find("[ignored]").unwrap()].to_string();
    let cfg = write_config(tmp.path(), &text);
    let one = hyperwass(&["scaling", "--config", &cfg, "--jobs", "1", "--out", tmp.path().join("one").to_str().unwrap()]);
    let many = hyperwass(&["scaling", "--config", &cfg, "--jobs", "3", "--out", tmp.path().join("many").to_str().unwrap()]);
    assert!(one.status.success() && many.status.success());
    assert_eq!(
        std::fs::read(tmp.path().join("one/results.csv")).unwrap(),
        std::fs::read(tmp.path().join("many/results.csv")).unwrap()
    );
}

#[test]
fn unknown_key_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("seed = 11", "seed = 11\nseeed = 12"));
    let out = scaling(tmp.path(), &cfg, "x");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seeed"), "{err}");
}

#[test]
fn missing_config_exits_with_config_code() {
    let out = hyperwass(&["scaling", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hyperwass(&["scaling"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_few_replicates_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("replicates = 10", "replicates = 3"));
    let out = scaling(tmp.path(), &cfg, "x");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.replicates"));
}

#[test]
fn oversized_quantization_exits_with_ceiling_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("w");
    let out = hyperwass(&[
        "wasserstein",
        "--config",
        &cfg,
        "--n",
        "64",
        "--level",
        "8",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn wasserstein_bracket_is_ordered() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("w");
    let out = hyperwass(&["wasserstein", "--config", &cfg, "--n", "64", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("wasserstein.json")).unwrap()).unwrap();
    for r in v["results"].as_array().unwrap() {
        let (lo, hi) = (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
        assert!(0.0 < lo && lo <= hi, "{r}");
    }
}

#[test]
fn sample_then_lowerbound_on_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("s");
    let out = hyperwass(&["sample", "--config", &cfg, "--n", "64", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let points = out_dir.join("points.txt");
    let out = hyperwass(&[
        "lowerbound",
        "--dimension",
        "2",
        "--p",
        "1",
        "--n",
        "64",
        "--points",
        points.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("lowerbound.json")).unwrap()).unwrap();
    let dual = v["dual"]["value"].as_f64().unwrap();
    let cert = v["certificate"]["w1_bound"].as_f64().unwrap();
    assert!(dual >= cert * (1.0 - 1e-9), "boundary truncation only helps: {dual} vs {cert}");
}

#[test]
fn moments_and_multiscale_write_their_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("m");
    let dir = out_dir.to_str().unwrap();
    let out = hyperwass(&["moments", "--config", &cfg, "--out", dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("moments.json").exists());
    assert!(out_dir.join("moments_p2.csv").exists());
    let out = hyperwass(&["multiscale", "--config", &cfg, "--n", "256", "--out", dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("multiscale.json")).unwrap()).unwrap();
    assert_eq!(v["orders"].as_array().unwrap().len(), 2);
}
