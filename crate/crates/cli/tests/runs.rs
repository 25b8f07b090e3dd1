use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nelson_fk_cli::{run, RunConfig, Status};

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, out: &Path) -> RunConfig {
    let text = fs::read_to_string(config_dir().join(name)).unwrap();
    let mut cfg = RunConfig::from_json(&text).unwrap();
    cfg.output_dir = out.display().to_string();
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nelson-fk"))
}

#[test]
fn shipped_configs_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for name in [
        "fk_vs_oracle_nonrel.json",
        "fk_vs_oracle_semirel.json",
        "trotter_split.json",
        "mc_run_free.json",
        "positivity_frohlich.json",
        "evolution_ramped.json",
        "renorm_scan_3d.json",
    ] {
        let out = tmp.path().join(name);
        let outcome = run(&load(name, &out)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(outcome.status, Status::Pass, "{name}");
        for f in &outcome.files {
            assert!(out.join(f).is_file(), "{name}: missing {f}");
        }
        let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
        assert_eq!(result["status"], "pass");
    }
}

#[test]
fn overlapping_split_is_a_usage_error() {
    let text = fs::read_to_string(config_dir().join("trotter_overlap.json")).unwrap();
    let err = RunConfig::from_json(&text).unwrap_err();
    assert!(err.to_string().contains("theta1"));
    let status = bin().arg("run").arg(config_dir().join("trotter_overlap.json")).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 8] {
        let out = tmp.path().join(format!("w{workers}"));
        let mut cfg = load("fk_vs_oracle_semirel.json", &out);
        if let nelson_fk_cli::Experiment::FkVsOracle { n_paths, .. } = &mut cfg.experiment {
            *n_paths = 20_000;
        }
        cfg.workers = workers;
        let outcome = run(&cfg).unwrap();
        let files: Vec<(String, Vec<u8>)> = outcome
            .files
            .iter()
            .filter(|f| f.as_str() != "manifest.json")
            .map(|f| (f.clone(), fs::read(out.join(f)).unwrap()))
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn subcommand_kind_must_match() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["trotter-check", config_dir().join("mc_run_free.json").to_str().unwrap(), "--output-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.kind"));
    let ok = bin()
        .args(["mc-run", config_dir().join("mc_run_free.json").to_str().unwrap(), "--workers", "2", "--output-dir"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 2);
}

#[test]
fn failed_expectation_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config_dir().join("positivity_frohlich.json"))
        .unwrap()
        .replace("\"improving\"", "\"neither\"");
    let path = tmp.path().join("cfg.json");
    fs::write(&path, text).unwrap();
    let status = bin().arg("run").arg(&path).arg("--output-dir").arg(tmp.path().join("out")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.json");
    fs::write(&path, r#"{"model": {"d": 1}, "max_bosons": 1, "experiment": {"kind": "mc-run"}}"#).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config field `model"));
}

#[test]
fn describe_lists_every_variant() {
    for v in nelson_fk_cli::config::VARIANTS {
        let out = bin().args(["describe", v]).output().unwrap();
        assert!(out.status.success(), "{v}");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(bin().args(["describe", "nope"]).status().unwrap().code(), Some(1));
}
