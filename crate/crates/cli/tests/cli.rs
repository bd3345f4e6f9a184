use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graph-entropy"))
}

fn write(dir: &TempDir, name: &str, doc: &Value) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

fn run(args: &[&str], files: &[&Path]) -> (i32, Value, String) {
    let mut cmd = bin();
    cmd.args(args.iter().take(1));
    cmd.args(files);
    cmd.args(args.iter().skip(1));
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    let stdout = String::from_utf8(stdout).unwrap();
    let doc = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (status.code().unwrap(), doc, String::from_utf8(stderr).unwrap())
}

fn p3() -> Value {
    json!({
        "x_alphabet": ["x1", "x2", "x3"],
        "y_alphabet": ["y"],
        "joint": [[0.3333333333], [0.3333333333], [0.3333333334]],
        "graph_edges": [["x1", "x2"], ["x2", "x3"]]
    })
}

fn cycle5(joint: Value, ys: &[&str]) -> Value {
    json!({
        "x_alphabet": ["a", "b", "c", "d", "e"],
        "y_alphabet": ys,
        "joint": joint,
        "graph_edges": [["a", "b"], ["b", "c"], ["c", "d"], ["d", "e"], ["e", "a"]]
    })
}

fn c5_conditioned() -> Value {
    cycle5(
        json!([[0.1, 0.05], [0.05, 0.2], [0.1, 0.1], [0.15, 0.05], [0.1, 0.1]]),
        &["u", "v"],
    )
}

fn planted() -> Value {
    json!({
        "x_alphabet": ["a", "b"],
        "y_alphabet": ["y"],
        "joint": [[0.5], [0.5]],
        "sets": [["a"], ["b"], ["a", "b"]],
        "options": {"keep_dominated_sets": true}
    })
}

fn shannon_conditional(joint: &[[f64; 2]]) -> f64 {
    (0..2)
        .map(|y| {
            let py: f64 = joint.iter().map(|row| row[y]).sum();
            -joint.iter().map(|row| row[y] * (row[y] / py).ln()).sum::<f64>()
        })
        .sum()
}

#[test]
fn path_on_three_solves_to_the_analytic_minimum() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p3.json", &p3());
    let (code, doc, _) = run(&["solve"], &[&f]);
    assert_eq!(code, 0);
    let nats = doc["entropy_nats"].as_f64().unwrap();
    assert!(
        (nats - ((3.0f64).ln() - 2.0 / 3.0 * (2.0f64).ln())).abs() < 1e-7,
        "{nats}"
    );
    assert_eq!(doc["entropy_bits"].as_f64().unwrap(), nats / std::f64::consts::LN_2);
    assert_eq!(doc["termination"], "converged");
    assert_eq!(doc["optimality"]["optimal"], true);
    assert!(doc["version"].is_string() && doc["config"]["max_iters"].is_u64());
}

#[test]
fn two_by_two_complete_graph_gives_shannon_conditional_entropy() {
    let dir = TempDir::new().unwrap();
    let joint = [[0.4, 0.1], [0.2, 0.3]];
    let f = write(
        &dir,
        "cond2.json",
        &json!({
            "x_alphabet": ["x1", "x2"],
            "y_alphabet": ["y1", "y2"],
            "joint": joint,
            "graph_edges": [["x1", "x2"]]
        }),
    );
    let (code, doc, _) = run(&["solve"], &[&f]);
    assert_eq!(code, 0);
    let nats = doc["entropy_nats"].as_f64().unwrap();
    assert!((nats - shannon_conditional(&joint)).abs() < 1e-7, "{nats}");
    assert!((nats - 0.6068).abs() < 1e-4);
}

#[test]
fn bits_flag_switches_the_headline_only() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p3.json", &p3());
    let (code, doc, _) = run(&["entropy", "--bits"], &[&f]);
    assert_eq!(code, 0);
    assert_eq!(doc["unit"], "bits");
    assert_eq!(doc["entropy"], doc["entropy_bits"]);
    assert!(doc["entropy_nats"].is_f64());
}

#[test]
fn mass_deficit_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let mut doc = p3();
    doc["joint"] = json!([[0.3], [0.3], [0.3]]);
    let f = write(&dir, "short.json", &doc);
    let (code, out, err) = run(&["solve"], &[&f]);
    assert_eq!(code, 2);
    assert_eq!(out, Value::Null);
    assert!(err.contains("deviating from 1 by 1.000e-1"), "{err}");
}

#[test]
fn malformed_documents_are_invalid_input() {
    let dir = TempDir::new().unwrap();
    let mut unknown = p3();
    unknown["graph_edges"] = json!([["x1", "x9"]]);
    let mut both = p3();
    both["sets"] = json!([["x1"]]);
    for (name, doc) in [("unknown.json", unknown), ("both.json", both)] {
        let f = write(&dir, name, &doc);
        assert_eq!(run(&["solve"], &[&f]).0, 2, "{name}");
    }
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{not json").unwrap();
    assert_eq!(run(&["enumerate"], &[&garbage]).0, 2);
    assert_eq!(run(&["enumerate"], &[&dir.path().join("missing.json")]).0, 2);
    let f = write(&dir, "p3.json", &p3());
    assert_eq!(run(&["solve", "--tol", "-1"], &[&f]).0, 2);
}

#[test]
fn enumeration_counts() {
    let dir = TempDir::new().unwrap();
    let uniform5 = json!([[0.2], [0.2], [0.2], [0.2], [0.2]]);
    let c5 = write(&dir, "c5.json", &cycle5(uniform5.clone(), &["y"]));
    let (code, doc, _) = run(&["enumerate"], &[&c5]);
    assert_eq!((code, doc["count"].as_u64()), (0, Some(5)));

    let mut k3 = p3();
    k3["graph_edges"] = json!([["x1", "x2"], ["x2", "x3"], ["x1", "x3"]]);
    let k3 = write(&dir, "k3.json", &k3);
    let (_, doc, _) = run(&["enumerate"], &[&k3]);
    assert_eq!(doc["sets"], json!([["x1"], ["x2"], ["x3"]]));

    let mut edgeless = p3();
    edgeless["graph_edges"] = json!([]);
    let edgeless = write(&dir, "edgeless.json", &edgeless);
    let (_, doc, _) = run(&["enumerate"], &[&edgeless]);
    assert_eq!(doc["sets"], json!([["x1", "x2", "x3"]]));
}

#[test]
fn planted_singletons_are_not_optimal() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "planted.json", &planted());
    let r = write(
        &dir,
        "r.json",
        &json!({"final_r": [{"set": ["a"], "weights": [0.5]}, {"set": ["b"], "weights": [0.5]}]}),
    );
    let (code, doc, _) = run(&["check"], &[&f, &r]);
    assert_eq!(code, 0);
    assert_eq!(doc["status"], "not-optimal");
    assert_eq!(doc["worst_set"], json!(["a", "b"]));
    assert!((doc["worst_value"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn check_rejects_points_that_are_not_fixed_points() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p3.json", &p3());
    let r = write(
        &dir,
        "r.json",
        &json!({"final_r": [{"set": ["x2"], "weights": [0.5]}, {"set": ["x1", "x3"], "weights": [0.5]}]}),
    );
    let (code, doc, _) = run(&["check"], &[&f, &r]);
    assert_eq!(code, 5);
    assert_eq!(doc["status"], "not-fixed-point");

    let off = write(
        &dir,
        "off.json",
        &json!({"final_r": [{"set": ["x2"], "weights": [0.7]}, {"set": ["x1", "x3"], "weights": [0.7]}]}),
    );
    assert_eq!(run(&["check"], &[&f, &off]).0, 2);
}

#[test]
fn a_result_document_checks_as_optimal() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "c5.json", &c5_conditioned());
    let (code, doc, _) = run(&["solve"], &[&f]);
    assert_eq!(code, 0);
    let result = write(&dir, "result.json", &doc);
    let (code, verdict, _) = run(&["check"], &[&f, &result]);
    assert_eq!(code, 0);
    assert_eq!(verdict["status"], "optimal");
}

#[test]
fn termination_exit_codes() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "c5.json", &c5_conditioned());
    let (code, doc, _) = run(&["solve", "--max-iters", "3"], &[&f]);
    assert_eq!(code, 3);
    assert_eq!(doc["termination"], "max-iters");

    let (code, doc, _) = run(&["solve", "--eps-act", "0.25", "--reactivation-limit", "0"], &[&f]);
    assert_eq!(code, 4);
    assert_eq!(doc["termination"], "reactivation-limit");
    assert_eq!(doc["optimality"]["optimal"], false);

    let (code, doc, _) = run(&["solve", "--eps-act", "0.25"], &[&f]);
    assert_eq!(code, 0);
    assert!(!doc["reactivated_sets"].as_array().unwrap().is_empty());
}

#[test]
fn traces_are_csv_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "c5.json", &c5_conditioned());
    let (t1, t2) = (dir.path().join("t1.csv"), dir.path().join("t2.csv"));
    for t in [&t1, &t2] {
        let (code, _, _) = run(&["solve", "--init", "uniform", "--trace", t.to_str().unwrap()], &[&f]);
        assert_eq!(code, 0);
    }
    let text = fs::read_to_string(&t1).unwrap();
    assert_eq!(text.lines().next(), Some("iter,phi_nats,max_delta,active_sets"));
    assert!(text.lines().count() > 2);
    assert_eq!(text, fs::read_to_string(&t2).unwrap());
}

#[test]
fn tau_of_the_five_cycle() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "c5.json",
        &cycle5(json!([[0.2], [0.2], [0.2], [0.2], [0.2]]), &["y"]),
    );
    let (code, doc, _) = run(&["tau"], &[&f]);
    assert_eq!(code, 0);
    assert!((doc["tau"].as_f64().unwrap() - 2.5).abs() < 1e-3, "{doc}");
    assert_eq!(doc["pi"].as_array().unwrap().len(), 5);
}

#[test]
fn oracle_on_path_on_three() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p3.json", &p3());
    let (code, doc, _) = run(&["oracle", "--resolution", "1e-3"], &[&f]);
    assert_eq!(code, 0);
    // The ten-digit input moves the optimum by about 2e-11.
    let exact = (3.0f64).ln() - 2.0 / 3.0 * (2.0f64).ln();
    for space in ["q", "r"] {
        let res = &doc[space];
        let (min, lower) = (res["minimum"].as_f64().unwrap(), res["lower_bound"].as_f64().unwrap());
        assert!(lower <= exact + 1e-9 && exact <= min + 1e-9, "{space}: {res}");
        assert!((min - 0.6365).abs() < 1e-3);
    }
    assert_eq!(run(&["oracle", "--resolution", "2"], &[&f]).0, 2);
}

#[test]
fn stdin_and_out_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.json");
    let mut child = bin()
        .args(["enumerate", "-", "--out", out.to_str().unwrap()])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(p3().to_string().as_bytes())
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    assert!(output.stdout.is_empty());
    let doc: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["count"], 2);
}
