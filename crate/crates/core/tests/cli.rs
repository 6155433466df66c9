use std::path::PathBuf;
use std::process::{Command, Output};

fn example(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
        .display()
        .to_string()
}

fn lpadc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpadc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> serde_json::Value {
    let out = lpadc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn value(v: &serde_json::Value) -> f64 {
    v["value"].as_f64().unwrap()
}

#[test]
fn text_output_lists_value_then_rules() {
    let out = lpadc(&["mpe", &example("ex2.lpad")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("value: 0.36"), "{}", lines[0]);
    assert_eq!(lines[1], "rule(1, pick(b1), [pick(b1):0.6, no_pick(b1):0.4], true)");
    assert_eq!(lines[2], "rule(0, red(b1), [red(b1):0.6, green(b1):0.3, blue(b1):0.1], pick(b1))");
}

#[test]
fn engine_and_oracle_agree_on_bundled_examples() {
    for (task, file) in [
        ("prob", "ex1.lpad"),
        ("mpe", "ex2.lpad"),
        ("map", "ex3.lpad"),
        ("mpe", "ex4.lpad"),
        ("map", "ex4.lpad"),
    ] {
        let path = example(file);
        let engine = json(&[task, &path, "--json"]);
        let oracle = json(&["oracle", task, &path, "--json"]);
        assert!(
            (value(&engine) - value(&oracle)).abs() <= 1e-9,
            "{task} {file}: {engine} vs {oracle}"
        );
    }
}

#[test]
fn normalize_divides_by_evidence_probability() {
    let joint = json(&["map", &example("ex3.lpad"), "--json"]);
    let cond = json(&["map", &example("ex3.lpad"), "--json", "--normalize"]);
    assert!((value(&cond) - 0.54 / 0.94).abs() <= 1e-9);
    assert_eq!(joint["assignment"], cond["assignment"]);
}

#[test]
fn extra_evidence_flag_conditions_query() {
    let v = json(&["prob", &example("ex1.lpad"), "--query", "pick(b1)", "--evidence", "ev", "--json"]);
    assert!((value(&v) - 0.6 * 0.9 / 0.94).abs() <= 1e-9);
}

#[test]
fn syntax_error_exits_one_with_location() {
    let dir = std::env::temp_dir().join(format!("lpadc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.lpad");
    std::fs::write(&bad, "a:0.5 :- .\n").unwrap();
    let out = lpadc(&["prob", bad.to_str().unwrap(), "--query", "a"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.lpad:1:"), "{err}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_file_and_bad_flags_exit_one() {
    assert_eq!(lpadc(&["prob", "/nonexistent.lpad"]).status.code(), Some(1));
    assert_eq!(lpadc(&["mpe"]).status.code(), Some(1));
    assert_eq!(lpadc(&["bench", "--family", "nope"]).status.code(), Some(1));
}

#[test]
fn node_cap_exits_two() {
    let out = lpadc(&["mpe", &example("ex4.lpad"), "--node-cap", "3"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_world_cap_exits_two() {
    let out = lpadc(&["oracle", "prob", &example("ex1.lpad"), "--cap", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_writes_csv_header_and_rows() {
    let out = lpadc(&["bench", "--family", "gh", "--sizes", "2,3", "--seeds", "2", "--task", "prob"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], lpadc::benchgen::CSV_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")), "{text}");
}

#[test]
fn dot_output_is_a_digraph() {
    let out = lpadc(&["dot", &example("ex1.lpad"), "--query", "ev"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("digraph"), "{text}");
}
