use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_parrondo");
const P: &str = "0.1,0.6,0.6,0.9";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json_of(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.extend(["--format", "json"]);
    let out = run(&full);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_str(&stdout(&out)).unwrap()
}

fn schema(command: &str) -> Value {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("schemas/{command}.v1.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(command: &str, doc: &Value) {
    let validator = jsonschema::validator_for(&schema(command)).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{command}: {errors:?}");
}

fn csv_header(args: &[&str]) -> Vec<String> {
    let mut full = args.to_vec();
    full.extend(["--format", "csv"]);
    let out = run(&full);
    stdout(&out)
        .lines()
        .next()
        .unwrap()
        .split(',')
        .map(String::from)
        .collect()
}

fn invocations() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        (
            "exact-mean",
            vec!["exact-mean", "--n", "5", "--gamma", "0.5", "--p", P],
        ),
        ("ergodicity", vec!["ergodicity", "--gamma", "0.5", "--p", P]),
        (
            "volume",
            vec!["volume", "--gamma", "0.5", "--samples", "1e4"],
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--n",
                "6",
                "--r",
                "2",
                "--s",
                "1",
                "--p",
                P,
                "--turns",
                "1e4",
                "--replicas",
                "2",
            ],
        ),
        (
            "scan",
            vec![
                "scan",
                "--n",
                "8",
                "--gamma",
                "0.5",
                "--turns",
                "2000",
                "--axis",
                "0.5,0.9",
                "--equal-middle",
            ],
        ),
        (
            "convergence",
            vec!["convergence", "--n", "5..7", "--gamma", "0.5", "--p", P],
        ),
        (
            "generator-check",
            vec![
                "generator-check",
                "--k",
                "1",
                "--n",
                "6",
                "--game",
                "b",
                "--p",
                P,
                "--draws",
                "2",
            ],
        ),
    ]
}

#[test]
fn json_outputs_match_published_schemas() {
    for (command, args) in invocations() {
        let doc = json_of(&args);
        assert_valid(command, &doc);
        assert_eq!(doc["manifest"]["command"], command);
    }
}

#[test]
fn csv_columns_follow_schema_order() {
    for (command, args) in invocations() {
        let header = csv_header(&args);
        let s = schema(command);
        let props = if s["properties"]["records"].is_object() {
            &s["properties"]["records"]["items"]["properties"]
        } else {
            &s["properties"]
        };
        let expected: Vec<String> = props
            .as_object()
            .unwrap()
            .keys()
            .filter(|k| *k != "schema" && *k != "manifest")
            .cloned()
            .collect();
        assert_eq!(header, expected, "{command}");
    }
}

#[test]
fn ergodicity_examples() {
    let doc = json_of(&["ergodicity", "--gamma", "0.5", "--p", "0.5,0.5,0.5,0.5"]);
    assert_eq!(doc["M"], 1.0);
    assert_eq!(doc["epsilon"], 1.5);
    assert_eq!(doc["ergodic"], true);
    let doc = json_of(&["ergodicity", "--gamma", "0.5", "--p", "1,0,0,1"]);
    assert_eq!(doc["ergodic"], false);
    assert!(doc["crosscheck_delta"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn exact_mean_examples() {
    let doc = json_of(&[
        "exact-mean",
        "--n",
        "8",
        "--gamma",
        "0.5",
        "--p",
        "0.5,0.5,0.5,0.5",
    ]);
    assert!(doc["records"][0]["mu"].as_f64().unwrap().abs() <= 1e-12);
    let doc = json_of(&["exact-mean", "--n", "6", "--r", "2", "--s", "1", "--p", P]);
    assert_eq!(doc["records"][0]["scheduler"], "periodic");
    let doc = json_of(&["exact-mean", "--n", "6", "--scheduler", "pure-b", "--p", P]);
    assert_eq!(doc["records"][0]["scheduler"], "pure-b");
}

#[test]
fn convergence_table_has_one_row_per_size() {
    let doc = json_of(&["convergence", "--n", "6..14", "--gamma", "0.5", "--p", P]);
    let rows = doc["records"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows[0]["delta"].is_null());
    assert!(rows[1..].iter().all(|r| r["delta"].is_f64()));
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code();
    assert_eq!(
        code(&[
            "exact-mean",
            "--n",
            "5",
            "--gamma",
            "0.5",
            "--p",
            "0.1,0.6,0.6,1.2"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["exact-mean", "--n", "30", "--gamma", "0.5", "--p", P]),
        Some(2)
    );
    assert_eq!(
        code(&["exact-mean", "--n", "5", "--gamma", "1.5", "--p", P]),
        Some(2)
    );
    assert_eq!(
        code(&["exact-mean", "--n", "5", "--p", P, "--gamma"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "exact-mean",
            "--n",
            "8",
            "--gamma",
            "0.5",
            "--p",
            P,
            "--max-iters",
            "5"
        ]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "volume",
            "--gamma",
            "0.5",
            "--samples",
            "10",
            "--out",
            "/nonexistent/dir/x.csv"
        ]),
        Some(1)
    );
    let out = run(&[
        "convergence",
        "--n",
        "5,6",
        "--gamma",
        "0.5",
        "--p",
        P,
        "--max-iters",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    // the table is still written
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"gamma": 0.3, "samples": "2e4", "seed": 5}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let doc = json_of(&["volume", "--config", cfg]);
    assert_eq!(doc["gamma"], 0.3);
    assert_eq!(doc["samples"], 20_000);
    let doc = json_of(&["volume", "--config", cfg, "--gamma", "0.5", "--seed", "9"]);
    assert_eq!(doc["gamma"], 0.5);
    assert_eq!(doc["seed"], 9);
    assert_eq!(doc["samples"], 20_000);
    let doc = json_of(&["volume", "--gamma", "0.5"]);
    assert_eq!(doc["samples"], 1_000_000);
    assert_eq!(doc["manifest"]["parameters"]["gamma"], 0.5);
}

#[test]
fn manifest_reruns_reproduce_results() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let out = run(&[
        "simulate",
        "--n",
        "9",
        "--gamma",
        "0.4",
        "--p",
        P,
        "--turns",
        "3e4",
        "--seed",
        "12",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = format!("{}.manifest.json", first.display());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 12);
    assert_eq!(m["outputs"][0], first.to_str().unwrap());
    let out = run(&[
        "simulate",
        "--config",
        &manifest,
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let args = |t: &'static str| {
        vec![
            "exact-mean",
            "--n",
            "10",
            "--gamma",
            "0.5",
            "--p",
            P,
            "--threads",
            t,
        ]
    };
    assert_eq!(stdout(&run(&args("1"))), stdout(&run(&args("4"))));
    let args = |t: &'static str| {
        vec![
            "volume",
            "--gamma",
            "0.5",
            "--samples",
            "3e5",
            "--threads",
            t,
        ]
    };
    assert_eq!(stdout(&run(&args("1"))), stdout(&run(&args("3"))));
}

#[test]
fn generator_check_reports_residual_rows() {
    let doc = json_of(&[
        "generator-check",
        "--k",
        "1",
        "--n",
        "8",
        "--game",
        "mixture",
        "--gamma",
        "0.5",
        "--p",
        P,
    ]);
    let row = &doc["records"][0];
    assert!(row["residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(row["pass"], true);
    let doc = json_of(&[
        "generator-check",
        "--n",
        "6,8",
        "--game",
        "periodic",
        "--r",
        "1",
        "--s",
        "1",
        "--p",
        P,
    ]);
    let rows = doc["records"].as_array().unwrap();
    assert!(rows[1]["residual"].as_f64().unwrap() < rows[0]["residual"].as_f64().unwrap());
    assert!(rows[0]["pass"].is_null());
}

#[test]
fn pure_aprime_simulation_pays_nothing() {
    let doc = json_of(&[
        "simulate",
        "--n",
        "50",
        "--scheduler",
        "pure-aprime",
        "--p",
        P,
        "--turns",
        "1e5",
        "--check-conservation",
    ]);
    let row = &doc["records"][0];
    assert_eq!(row["total_profit"], 0);
    assert_eq!(row["aprime_nonzero_turns"], 0);
}
