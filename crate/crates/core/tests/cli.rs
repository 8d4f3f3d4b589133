mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;

use nfacount::cli::run;
use num_rational::BigRational;
use serde_json::Value;
use tempfile::TempDir;

use common::{instance, single_word, TOTAL};

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
    path.to_str().unwrap().to_string()
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["nfacount"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn count_args<'a>(input: &'a str, n: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec!["count", "--input", input, "--n", n, "--epsilon", "1", "--delta", "0.2", "--seed", seed, "--no-timing"]
}

#[test]
fn exact_enum_on_total_automaton() {
    let dir = TempDir::new().unwrap();
    let total = write(&dir, "total.json", TOTAL);
    let (code, out, _) = invoke(&["exact", "--input", &total, "--n", "3", "--oracle", "enum"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "8");
    let (_, out, _) = invoke(&["exact", "--input", &total, "--n", "3"]);
    assert_eq!(out.trim(), "8");
}

#[test]
fn count_on_empty_slice() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "word.json", &single_word("11").to_json());
    let (code, out, _) = invoke(&count_args(&input, "5", "0"));
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["estimate"], "0");
    assert_eq!(v["estimate_rational"], "0");
    assert_eq!(v["n_cores_run"], 0);
}

#[test]
fn count_output_shape_and_determinism() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "a.json", &instance(3, 4, 1).to_json());
    let (code, first, _) = invoke(&count_args(&input, "4", "9"));
    assert_eq!(code, 0);
    let (_, second, _) = invoke(&count_args(&input, "4", "9"));
    assert_eq!(first, second);
    let v: Value = serde_json::from_str(&first).unwrap();
    for field in ["estimate", "estimate_rational", "params", "n_cores_run", "runtime_ms", "certified", "scheme", "seed"] {
        assert!(v.get(field).is_some(), "{field}");
    }
    assert_eq!(v["n_cores_run"], v["params"]["n_u"]);
    assert!(v["runtime_ms"].is_null());
    assert_eq!(v["certified"], true);
    let rational: BigRational = v["estimate_rational"].as_str().unwrap().parse().unwrap();
    assert!(rational > BigRational::from_integer(0.into()));

    let mut one_job = count_args(&input, "4", "9");
    one_job.extend(["--jobs", "1"]);
    assert_eq!(invoke(&one_job).1, first);
    let mut with_exact = count_args(&input, "4", "9");
    with_exact.extend(["--exact", "dp"]);
    let v: Value = serde_json::from_str(&invoke(&with_exact).1).unwrap();
    assert!(v["exact"].is_string());
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{");
    let total = write(&dir, "total.json", TOTAL);
    let (code, _, err) = invoke(&count_args(&bad, "3", "0"));
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"]["code"], "malformed_automaton");

    let (code, _, err) = invoke(&["count", "--input", &total, "--n", "3", "--epsilon=-1", "--delta", "0.2"]);
    assert_eq!(code, 2);
    assert!(err.contains("invalid_epsilon"));
    let (code, _, err) = invoke(&["count", "--input", &total, "--n", "3", "--epsilon", "x", "--delta", "0.2"]);
    assert_eq!(code, 2);
    assert!(err.contains("invalid_number"));
    let missing = dir.path().join("missing.json");
    let (code, _, _) = invoke(&["exact", "--input", missing.to_str().unwrap(), "--n", "3"]);
    assert_eq!(code, 2);
    let (code, _, _) = invoke(&["count", "--input", &total]);
    assert_eq!(code, 2);
}

#[test]
fn dump_unrolled_is_json() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "fig.json", common::FIGURE);
    let (code, out, _) = invoke(&["dump-unrolled", "--input", &input, "--n", "4"]);
    assert_eq!(code, 0);
    serde_json::from_str::<Value>(&out).unwrap();
}

#[test]
fn bench_formats() {
    let dir = TempDir::new().unwrap();
    let grid = r#"{"instances":[{"id":"a","m":3,"n":4,"instance_seed":1},{"id":"b","m":2,"n":5,"instance_seed":2}],
        "epsilon":"1","delta":"0.5","schemes":["cache2","reference"],"seeds":[1],"oracle":"dp"}"#;
    let path = write(&dir, "grid.json", grid);
    let (code, out, err) = invoke(&["bench", "--grid", &path]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    // the scheme never changes the estimate
    assert_eq!(lines[0]["estimate"], lines[1]["estimate"]);
    let (code, csv, _) = invoke(&["bench", "--grid", &path, "--format", "csv"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().count(), 5);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nfacount"))
}

fn run_binary(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn binary_seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "a.json", &instance(3, 4, 2).to_json());
    let base = ["count", "--input", &input, "--n", "4", "--epsilon", "1", "--delta", "0.5", "--no-timing"];
    let (code, from_env) = run_binary(binary().args(base).env("NFACOUNT_SEED", "12"));
    assert_eq!(code, 0);
    let (_, from_flag) = run_binary(binary().args(base).arg("--seed").arg("12").env_remove("NFACOUNT_SEED"));
    assert_eq!(from_env, from_flag);
    let v: Value = serde_json::from_str(&from_env).unwrap();
    assert_eq!(v["seed"], 12);
}

#[test]
fn binary_exit_codes() {
    let (code, _) = run_binary(binary().args(["exact", "--input", "/nonexistent/x.json", "--n", "2"]));
    assert_eq!(code, 2);
    assert!(Path::new(env!("CARGO_BIN_EXE_nfacount")).exists());
}

/// Count and exact on seeded m=5, n=8 instances agree within a factor of two
/// for at least 80% of the seeds.
#[test]
fn count_within_factor_two_of_exact() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "m5.json", &instance(5, 8, 77).to_json());
    let (_, exact, _) = invoke(&["exact", "--input", &input, "--n", "8"]);
    let exact: BigRational = exact.trim().parse().unwrap();
    let seeds = 5;
    let mut good = 0;
    for seed in 0..seeds {
        let s = seed.to_string();
        let (code, out, _) = invoke(&count_args(&input, "8", &s));
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        let est: BigRational = v["estimate_rational"].as_str().unwrap().parse().unwrap();
        let two = BigRational::from_integer(2.into());
        if est <= &exact * &two && &est * &two >= exact {
            good += 1;
        }
    }
    assert!(good * 5 >= seeds * 4, "{good}/{seeds}");
}
