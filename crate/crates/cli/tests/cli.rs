use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use refine_core::graph::{EdgeSet, LabeledGraph, Split};
use refine_core::io::{load_dataset, save_dataset};
use refine_core::kernel::read_kernel_dump;
use serde_json::Value;
use tempfile::TempDir;

fn refine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refine"))
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("REFINE_THREADS")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--output", p(dir), "--classes", "3", "--class-size", "20"];
    args.extend_from_slice(extra);
    let out = refine(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn synth_then_homophily() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    synth(&data, &["--seed", "4"]);
    for f in ["edges.tsv", "features.tsv", "labels.tsv", "splits.tsv"] {
        assert!(data.join(f).is_file(), "{f} missing");
    }
    let (g, _) = load_dataset(&data).unwrap();
    let out = refine(&["--json", "homophily", "--input", p(&data)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["nodes"], 60);
    assert_eq!(v["edges"], g.edges().len());
    let h = g.homophily().unwrap().homophily;
    assert_eq!(v["homophily"]["ratio"], format!("{}/{}", h.numer(), h.denom()));
}

#[test]
fn rewire_writes_outputs_and_report() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    let out_dir = tmp.path().join("o");
    synth(&data, &[]);
    let out = refine(&[
        "--json", "rewire", "--input", p(&data), "--output", p(&out_dir), "--epsilon", "1", "--k", "10",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let printed = json(&out);
    let saved: Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert_eq!(saved["config"]["k"]["count"], 10);
    assert_eq!(saved["edges"]["applied"], 10);
    let (g, _) = load_dataset(&data).unwrap();
    let edges = fs::read_to_string(out_dir.join("rewired_edges.tsv")).unwrap();
    let rows = edges.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count();
    assert_eq!(rows, g.edges().len() + 10);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    synth(&data, &[]);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epsilon": 2.0, "direction": "delete", "k": {"count": 3}, "seed": 9}"#).unwrap();
    let out = refine(&["--json", "rewire", "--input", p(&data), "--config", p(&cfg), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["config"]["direction"], "delete");
    assert_eq!(v["config"]["seed"], 1);
    assert_eq!(v["edges"]["applied"], 3);
    assert_eq!(v["edges"]["output"].as_u64().unwrap() + 3, v["edges"]["input"].as_u64().unwrap());

    fs::write(&cfg, r#"{"epsilon": 2.0, "colour": "red"}"#).unwrap();
    assert_eq!(code(&refine(&["rewire", "--input", p(&data), "--config", p(&cfg)])), 2);
}

/// Complete graph: nothing can be added, so the only cluster degrades.
fn complete_dataset(dir: &Path) {
    let n = 6;
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.insert_pair(i, j).unwrap();
        }
    }
    let labels = (0..n).map(|i| Some((i % 2) as u32)).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
    let g = LabeledGraph::new(edges, labels, Some(x), vec![Split::Train; n]).unwrap();
    save_dataset(&g, dir).unwrap();
}

#[test]
fn degradation_exit_code() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    complete_dataset(&data);
    let out = refine(&["rewire", "--input", p(&data), "--epsilon", "1"]);
    assert_eq!(code(&out), 4);
    let report: Value = serde_json::from_slice(&fs::read(data.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["degraded"], true);
    assert!(report["clusters"][0]["pass_through"]["reason"].is_string());

    let out = refine(&["rewire", "--input", p(&data), "--epsilon", "1", "--allow-degraded"]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read_to_string(data.join("rewired_edges.tsv")).unwrap().lines().filter(|l| !l.starts_with('#')).count(),
        15
    );
}

#[test]
fn usage_and_data_errors() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    synth(&data, &[]);
    assert_eq!(code(&refine(&["rewire", "--input", p(&data), "--k", "2.5"])), 2);
    assert_eq!(code(&refine(&["rewire", "--input", p(&data), "--epsilon", "-1"])), 2);
    assert_eq!(code(&refine(&["rewire"])), 2);
    assert_eq!(code(&refine(&["frobnicate"])), 2);

    let missing = refine(&["--json", "homophily", "--input", p(&tmp.path().join("absent"))]);
    assert_eq!(code(&missing), 3);
    assert_eq!(json(&missing)["exit_code"], 3);

    fs::write(data.join("edges.tsv"), "0\t1\n1\tx\n").unwrap();
    let bad = refine(&["homophily", "--input", p(&data)]);
    assert_eq!(code(&bad), 3);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("edges.tsv"));
}

#[test]
fn thread_variable_must_be_positive() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    synth(&data, &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_refine"))
        .args(["homophily", "--input", p(&data)])
        .env("REFINE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn kernel_dump_round_trips() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    let out_dir = tmp.path().join("o");
    synth(&data, &[]);
    let out = refine(&[
        "reference", "--input", p(&data), "--output", p(&out_dir), "--epsilon", "1", "--dump-kernel",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (kernel, eps) = read_kernel_dump(&out_dir.join("kernel.bin"), &out_dir.join("kernel.meta")).unwrap();
    assert_eq!(kernel.n(), 60);
    assert_eq!(eps, 1.0);
    assert_eq!(fs::metadata(out_dir.join("kernel.bin")).unwrap().len(), 60 * 60 * 8);
    assert!(kernel.asymmetry() <= 1e-12);
    let refs = fs::read_to_string(out_dir.join("reference_edges.tsv")).unwrap();
    assert!(refs.lines().any(|l| !l.starts_with('#')));

    let split = refine(&["reference", "--input", p(&data), "--cluster-size", "20", "--dump-kernel"]);
    assert_eq!(code(&split), 2);
}

#[test]
fn validate_small_suites() {
    let out = refine(&[
        "--json", "validate", "--cases", "30", "--theorem-trials", "100", "--mc-configs", "2", "--mc-executions",
        "500",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["propositions"]["cases"], 30);
}

#[test]
fn sweep_writes_one_csv_per_rate_and_direction() {
    let tmp = TempDir::new().unwrap();
    let out = refine(&[
        "--json", "sweep", "--output", p(tmp.path()), "--p", "0.1,0.6", "--trials", "5", "--direction", "both",
        "--class-size", "20",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let curves = json(&out);
    assert_eq!(curves.as_array().unwrap().len(), 4);
    for c in curves.as_array().unwrap() {
        let csv = fs::read_to_string(c["file"].as_str().unwrap()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,mean_H,expected_H,std_H,trials"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], first[2]);
    }
}
