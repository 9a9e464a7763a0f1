//! End-to-end checks of the command line binary: exit codes, output
//! formats, and problem-text round trips.

use liftgen::harness;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftgen")).args(args).output().unwrap()
}

fn write_temp(name: &str, text: &str) -> PathBuf {
    let path = std::env::temp_dir().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn exit_codes_follow_the_contract() {
    // 0: a successful count.
    let file = write_temp(
        "liftgen-cli-fn3.lg",
        "domain 3\nsentence forall x exists[=1] y: f(x,y)\n",
    );
    let out = run(&["count", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "27");

    // 1: usage errors, unreadable files, malformed input.
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["count", "/no/such/file.lg"]).status.code(), Some(1));
    let broken = write_temp("liftgen-cli-broken.lg", "domain 2\nsentence forall x: R(\n");
    assert_eq!(run(&["count", broken.to_str().unwrap()]).status.code(), Some(1));

    // 2: sampling an unsatisfiable sentence.
    let unsat = write_temp(
        "liftgen-cli-unsat.lg",
        "domain 2\nsentence forall x: R(x,x)\nsentence forall x: ~R(x,x)\n",
    );
    assert_eq!(run(&["sample", unsat.to_str().unwrap(), "--num", "1"]).status.code(), Some(2));

    // 3: statistical rejection. Three draws cannot track a four-point
    // uniform reference at alpha 0.9; with seed 1 the deterministic stream
    // lands them unevenly enough to cross the bound.
    let out =
        run(&["validate", "functions", "-n", "2", "--num", "3", "--seed", "1", "--alpha", "0.9"]);
    assert_eq!(out.status.code(), Some(3));

    // With a real sample size the same validator accepts.
    let out = run(&["validate", "functions", "-n", "3", "--num", "2000", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sample_output_formats_agree() {
    let file = write_temp(
        "liftgen-cli-tc4.lg",
        &harness::preset_text("two-colored-graphs", 4, 0).unwrap(),
    );
    let path = file.to_str().unwrap();

    let lines_out = run(&["sample", path, "--num", "5", "--seed", "7"]);
    assert!(lines_out.status.success());
    let text = String::from_utf8(lines_out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# seed=7 problem="));
    let hash = header.rsplit('=').next().unwrap().to_string();
    let models: Vec<&str> = lines.collect();
    assert_eq!(models.len(), 5);

    let json_out = run(&["sample", path, "--num", "5", "--seed", "7", "--format", "json"]);
    assert!(json_out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&json_out.stdout).unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["problem"], serde_json::Value::String(hash));
    let json_models: Vec<&str> =
        doc["models"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(json_models, models);
}

#[test]
fn emitted_presets_round_trip() {
    // A combinatorial preset recounts identically from its emitted text.
    let emitted = run(&["preset", "two-colored-graphs", "-n", "4", "--emit-problem"]);
    assert!(emitted.status.success());
    let file = write_temp("liftgen-cli-emit-tc.lg", &String::from_utf8(emitted.stdout).unwrap());
    let out = run(&["count", file.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "162");

    // An MLN preset emits its rule syntax, and sampling the emitted file
    // yields models over the MLN's own predicates only.
    let emitted = run(&["preset", "deskmate", "-n", "4", "--emit-problem"]);
    assert!(emitted.status.success());
    let file = write_temp("liftgen-cli-emit-dm.lg", &String::from_utf8(emitted.stdout).unwrap());
    let out = run(&["sample", file.to_str().unwrap(), "--num", "3", "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("__"), "internal predicates leaked: {text}");
    assert!(text.lines().skip(1).all(|l| l.contains("mate(")));
}
