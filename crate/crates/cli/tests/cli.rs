//! End-to-end tests of the `ergmx` binary and the command layer.

use std::path::Path;
use std::process::Command;

fn ergmx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergmx"))
}

fn write_fivenets(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("nets.json");
    let out = ergmx()
        .args(["fivenets", "--seed", "42", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn fit_fivenets_file_yields_two_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let nets = write_fivenets(dir.path());
    let fit_path = dir.path().join("fit.json");
    let out = ergmx()
        .args(["fit", "--model", "edges + nodematch(gender)", "--networks"])
        .arg(&nets)
        .arg("--out")
        .arg(&fit_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_path).unwrap()).unwrap();
    assert_eq!(result["coefficients"].as_array().unwrap().len(), 2);
    assert_eq!(result["status"]["code"], "00");
    assert_eq!(result["num_networks"], 5);
}

#[test]
fn fit_complete_graphs_reports_status_30_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let nets = dir.path().join("complete.json");
    std::fs::write(
        &nets,
        serde_json::json!({
            "version": 1,
            "networks": [
                {"id": "a", "n": 4, "directed": true,
                 "ties": (0..4).flat_map(|i| (0..4).filter(move |&j| j != i)
                     .map(move |j| (i, j))).collect::<Vec<_>>()},
            ]
        })
        .to_string(),
    )
    .unwrap();
    let out = ergmx()
        .args(["fit", "--model", "edges", "--networks"])
        .arg(&nets)
        .output()
        .unwrap();
    assert!(out.status.success(), "status 30 is a structured result");
    let result: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["status"]["code"], "30");
    assert_eq!(result["coefficients"][0]["estimate"], "inf");
    assert_eq!(result["coefficients"][0]["se"], 0.0);
}

#[test]
fn unknown_term_fails_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let nets = write_fivenets(dir.path());
    let out = ergmx()
        .args(["fit", "--model", "edgez", "--networks"])
        .arg(&nets)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("position 0"), "stderr: {stderr}");
    assert!(stderr.contains("edgez"), "stderr: {stderr}");
}

#[test]
fn simulate_roundtrips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let nets = dir.path().join("sim.json");
    let out = ergmx()
        .args([
            "simulate",
            "--model",
            "edges + nodematch(gender)",
            "--theta",
            "-2,2",
            "--n",
            "4",
            "--count",
            "5",
            "--seed",
            "7",
            "--attr",
            "gender=1,1,0,0",
            "--out",
        ])
        .arg(&nets)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let fit = ergmx()
        .args(["fit", "--model", "edges + nodematch(gender)", "--networks"])
        .arg(&nets)
        .output()
        .unwrap();
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let result: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(result["num_networks"], 5);

    // The file records its generator settings.
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&nets).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["seed"], 7);
}

#[test]
fn enumerate_summary_values() {
    let out = ergmx()
        .args(["enumerate", "--n", "4", "--model", "edges"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"], 13);
    assert_eq!(doc["weight_total"], 4096);
    assert_eq!(doc["bounds"][0]["min"], 0.0);
    assert_eq!(doc["bounds"][0]["max"], 12.0);
}

#[test]
fn enumerate_large_requires_flag() {
    let out = ergmx()
        .args(["enumerate", "--n", "6", "--model", "edges"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--allow-large"), "stderr: {stderr}");
}

#[test]
fn refitting_identical_inputs_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let nets = write_fivenets(dir.path());
    let mut bytes = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("fit{run}.json"));
        let out = ergmx()
            .args(["fit", "--model", "edges + nodematch(gender)", "--networks"])
            .arg(&nets)
            .arg("--out")
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success());
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn gof_produces_one_row_per_network_and_term() {
    let dir = tempfile::tempdir().unwrap();
    let nets = write_fivenets(dir.path());
    let fit_path = dir.path().join("fit.json");
    assert!(ergmx()
        .args(["fit", "--model", "edges + nodematch(gender)", "--networks"])
        .arg(&nets)
        .arg("--out")
        .arg(&fit_path)
        .status()
        .unwrap()
        .success());

    let csv_path = dir.path().join("gof.csv");
    assert!(ergmx()
        .args(["gof", "--result"])
        .arg(&fit_path)
        .arg("--networks")
        .arg(&nets)
        .args(["--level", "0.95", "--out"])
        .arg(&csv_path)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    // Header plus 5 networks x 2 terms.
    assert_eq!(csv.lines().count(), 11);

    let json_path = dir.path().join("gof.json");
    assert!(ergmx()
        .args(["gof", "--result"])
        .arg(&fit_path)
        .arg("--networks")
        .arg(&nets)
        .arg("--out")
        .arg(&json_path)
        .status()
        .unwrap()
        .success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(doc["entries"].as_array().unwrap().len(), 10);
}

#[test]
fn boot_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let nets = write_fivenets(dir.path());
    let fit_path = dir.path().join("fit.json");
    assert!(ergmx()
        .args(["fit", "--model", "edges + nodematch(gender)", "--networks"])
        .arg(&nets)
        .arg("--out")
        .arg(&fit_path)
        .status()
        .unwrap()
        .success());

    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = ergmx()
            .args(["boot", "--result"])
            .arg(&fit_path)
            .arg("--networks")
            .arg(&nets)
            .args(["-R", "50", "--seed", "13"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn adjacency_import_works() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adj.txt");
    std::fs::write(&path, "0 1 0\n0 0 1\n1 0 0\n\n0 0 0\n1 0 0\n1 1 0\n").unwrap();
    let out = ergmx()
        .args(["fit", "--model", "edges", "--format", "adj", "--networks"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["num_networks"], 2);
    // 6 of 12 possible ties pooled: logit(1/2) = 0.
    let est = result["coefficients"][0]["estimate"].as_f64().unwrap();
    assert!(est.abs() < 1e-7, "estimate {est}");
}

#[test]
fn sim_study_cli_runs_with_config_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "generate_formula": "edges",
            "fit_formula": "edges + ttriad",
            "replications": 3,
            "sample_sizes": [5],
            "seed": 5,
        })
        .to_string(),
    )
    .unwrap();
    let records = dir.path().join("records.jsonl");
    let aggregates = dir.path().join("agg.csv");
    let ckpt = dir.path().join("ckpt.jsonl");
    let out = ergmx()
        .args(["sim-study", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out-records")
        .arg(&records)
        .arg("--out-aggregates")
        .arg(&aggregates)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&records).unwrap().lines().count(),
        3
    );
    assert!(std::fs::read_to_string(&aggregates)
        .unwrap()
        .starts_with("kind,sample_size"));
    // The checkpoint holds the same three records.
    assert_eq!(std::fs::read_to_string(&ckpt).unwrap().lines().count(), 3);

    // Rerunning with the checkpoint does no new work but returns everything.
    let out2 = ergmx()
        .args(["sim-study", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out-records")
        .arg(&records)
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(std::fs::read_to_string(&ckpt).unwrap().lines().count(), 3);
}

#[test]
fn cache_dir_round_trips_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = ergmx()
        .args(["enumerate", "--n", "4", "--model", "edges + ttriad", "--cache-dir"])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(out.status.success());
    let entries: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1);

    // Second run loads the persisted table and reports identical numbers.
    let out2 = ergmx()
        .args(["enumerate", "--n", "4", "--model", "edges + ttriad", "--cache-dir"])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(out.stdout, out2.stdout);
}
