use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn graph(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../graphs").join(name)
}

fn ratid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratid")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ratid-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn identify_four_node_prints_polynomials() {
    let g = graph("four_node.json");
    let o = ratid(&["identify", "--graph", g.to_str().unwrap(), "--degree", "2", "--tian", "--emit-formulas"]);
    assert_eq!(o.status.code(), Some(0));
    let report = stdout_json(&o);
    assert_eq!(report["verdict"], "yes");
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("l_{1,2} = (s_{1,2}) / (s_{1,1})"), "{stderr}");
    assert!(stderr.contains("l_{3,4} = (-l_{1,2}*s_{1,4} + s_{2,4}) / (s_{2,3})"), "{stderr}");
}

#[test]
fn identify_with_samples_attaches_verification() {
    let g = graph("adherence_trial.json");
    let o = ratid(&["identify", "--graph", g.to_str().unwrap(), "--samples", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["verification"]["passed"], true);
}

#[test]
fn bow_is_not_identified() {
    let g = graph("bow.json");
    for method in ["degree-bounded", "garcia-puente"] {
        let o = ratid(&["identify", "--graph", g.to_str().unwrap(), "--method", method]);
        assert_eq!(o.status.code(), Some(1), "{method}");
        assert_eq!(stdout_json(&o)["verdict"], "no", "{method}");
    }
}

#[test]
fn malformed_input_exits_with_two() {
    let bad = scratch("bad.json");
    std::fs::write(&bad, r#"{"p": 2, "directed": [[2, 1], [1, 2]], "bidirected": []}"#).unwrap();
    assert_eq!(ratid(&["identify", "--graph", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ratid(&["identify", "--graph", "/nonexistent/graph.json"]).status.code(), Some(2));
    let g = graph("bow.json");
    assert_eq!(ratid(&["identify", "--graph", g.to_str().unwrap(), "--degree", "1"]).status.code(), Some(2));
    assert_eq!(ratid(&["census", "--timeout", "0"]).status.code(), Some(2));
    assert_eq!(ratid(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(ratid(&["--help"]).status.code(), Some(0));
}

#[test]
fn census_of_the_empty_graph() {
    let summary = scratch("summary0.json");
    let o = ratid(&["census", "--max-edges", "0", "--summary", summary.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("index,graph,"));
    assert!(lines[1].contains(",yes,"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["enumerated"], 1);
    assert_eq!(s["degbd_identified"], 1);
}

#[test]
fn census_with_one_edge() {
    let summary = scratch("summary1.json");
    let o = ratid(&["census", "--max-edges", "1", "--summary", summary.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    // the empty graph, one directed edge, one bidirected edge
    assert_eq!(s["enumerated"], 3);
    assert_eq!(s["degbd_identified"], 3);
    assert_eq!(s["gp_identified"], 3);
    assert_eq!(s["disagreements"].as_array().unwrap().len(), 0);
}

#[test]
fn random_exp_without_graphs_writes_the_header() {
    let o = ratid(&["random-exp", "--graphs", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap().trim(),
        "edges,total,gp_identified,gp_mean_time_s,degbd_identified,degbd_mean_time_s"
    );
}

#[test]
fn random_exp_with_a_tiny_budget_identifies_nothing() {
    let rows = scratch("rows.csv");
    let o = ratid(&[
        "random-exp", "--graphs", "3", "--nodes", "8", "--edge-prob", "1/2", "--timeout", "0.000001", "--rows",
        rows.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&rows).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| !l.contains(",yes,")), "{text}");
}

#[test]
fn trek_info_for_the_instrumental_variable() {
    let g = graph("instrumental_variable.json");
    let o = ratid(&["trek-info", "--graph", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["w_trek"], 5);
    assert_eq!(v["d_prime"], 25);
    let w23 = v["weights"].as_array().unwrap().iter().find(|e| e["u"] == 2 && e["v"] == 3).unwrap();
    assert_eq!(w23["weight"], 4);
}

#[test]
fn trek_info_for_an_edgeless_graph() {
    let empty = scratch("empty.json");
    std::fs::write(&empty, r#"{"p": 3, "directed": [], "bidirected": []}"#).unwrap();
    let o = ratid(&["trek-info", "--graph", empty.to_str().unwrap(), "--degree", "3"]);
    let v = stdout_json(&o);
    assert!(v["weights"].as_array().unwrap().iter().all(|e| e["weight"] == 1));
    assert_eq!(v["w_trek"], 1);
    assert_eq!(v["d_prime"], 3);
}
