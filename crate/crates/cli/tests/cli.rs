use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use subspec_core::io::{graph_to_json, parse_graph_json};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subspec")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("subspec-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn norm_of_e10() {
    let out = run(&["norm", "--graph", &data("e10.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["tool"], "subspec");
    assert_eq!(r["command"], "norm");
    assert_eq!(r["inputs"][0]["fingerprint"].as_str().unwrap().len(), 64);
    let n = r["result"]["norm_squared"].as_f64().unwrap();
    assert!((n - 4.0264).abs() < 1e-4, "{n}");
}

#[test]
fn folner_check_on_truncated_half_line() {
    let out = run(&["folner-check", "--graph", &data("ainf4.json"), "--set", "0..12", "--epsilon", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["pass"], true);
    let ratio = r["result"]["ratio"].as_f64().unwrap();
    assert!((ratio - 0.4992).abs() < 1e-4, "{ratio}");

    let out = run(&["folner-check", "--graph", &data("ainf4.json"), "--set", "0..3", "--epsilon", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["pass"], false);
}

#[test]
fn spin_cell_has_index_two() {
    let out = run(&["cell-verify", "--cell", &data("spin.json")]);
    assert_eq!(out.status.code(), Some(0));
    let idx = report(&out)["result"]["certificate"]["subfactor_index"].as_f64().unwrap();
    assert!((idx - 2.0).abs() < 1e-9);
}

#[test]
fn input_errors_exit_two() {
    let iso = scratch("isolated.json", r#"{"odd":["x"],"even":["a","b"],"edges":[["x","a",1]]}"#);
    let out = run(&["norm", "--graph", &iso]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "input_error");

    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["norm"]).status.code(), Some(2));
    assert_eq!(run(&["norm", "--graph", "/nonexistent/graph.json"]).status.code(), Some(2));
    assert_eq!(run(&["folner-check", "--builtin", "a_inf", "--lambda-inv", "4", "--set", "5..2", "--epsilon", "0.5"]).status.code(), Some(2));
}

#[test]
fn checked_failures_exit_one() {
    let out = run(&["folner-search", "--builtin", "a_inf", "--lambda-inv", "5", "--epsilon", "0.1", "--method", "interval", "--max-size", "200"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["status"], "fail");
    assert_eq!(r["result"]["outcome"]["tag"], "Exhausted");

    let out = run(&["query-e2", "--alpha", "3.5", "--max-vertices", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["tag"], "NotFoundWithinBounds");

    // the last even vertex of a truncation is not Markov
    let out = run(&["markov", "--graph", &data("ainf4.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_deterministic() {
    for args in [
        vec!["norm", "--graph", &data("e10.json")],
        vec!["tower", "--graph", &data("e10.json"), "--depth", "6"],
        vec!["folner-search", "--builtin", "a_inf", "--lambda-inv", "4", "--epsilon", "0.5"],
        vec!["cell-verify", "--cell", &data("fourier3.json")],
        vec!["index", "--scene", &data("spin.json"), "--m", "P01", "--b", "P00", "--samples", "100", "--seed", "7"],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn graph_serialization_round_trips() {
    for name in ["e10.json", "ainf4.json"] {
        let text = std::fs::read_to_string(data(name)).unwrap();
        let d = parse_graph_json(&text).unwrap();
        let once = graph_to_json(&d.graph, d.weights.as_deref(), d.lambda_inv.as_ref());
        let d2 = parse_graph_json(&once).unwrap();
        let twice = graph_to_json(&d2.graph, d2.weights.as_deref(), d2.lambda_inv.as_ref());
        assert_eq!(once, twice, "{name}");
    }
}

#[test]
fn enumerate_appends_only_new_entries() {
    let dir = std::env::temp_dir().join(format!("subspec-atlas-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("atlas.jsonl");
    let _ = std::fs::remove_file(&path);
    let first = run(&["enumerate", "--max-vertices", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    let written = report(&first)["result"]["written"].as_u64().unwrap();
    assert!(written > 0);
    let second = run(&["enumerate", "--max-vertices", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(report(&second)["result"]["written"], 0);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count() as u64, written);

    let out = Command::new(env!("CARGO_BIN_EXE_subspec"))
        .args(["enumerate", "--max-vertices", "4"])
        .env("SUBSPEC_ATLAS_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out)["result"]["atlas_path"].as_str().unwrap().starts_with(dir.to_str().unwrap()));
}

#[test]
fn dot_output() {
    let out = run(&["emit-dot", "--builtin", "d_inf", "--lambda-inv", "4", "--radius", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("graph"));
    assert!(dot.contains("--"));
}
