//! Black-box tests of the binary: JSON contracts, exit codes, environment
//! overrides, and agreement with the library pipeline.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_longtail"))
}

fn stdout_json(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "expected success, got {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is one JSON document")
}

fn stderr_error(output: &Output, want_code: i32) -> Value {
    assert_eq!(output.status.code(), Some(want_code));
    let doc: Value =
        serde_json::from_slice(&output.stderr).expect("stderr is one JSON error document");
    assert!(doc["error"]["kind"].is_string());
    assert!(doc["error"]["message"].is_string());
    doc["error"].clone()
}

fn generate(dir: &Path, seed: u64, sigma: f64) -> std::path::PathBuf {
    let samples = dir.join(format!("s{seed}.txt"));
    let out = bin()
        .args(["generate", "--d", "300", "--n", "80", "--s", "3", "--alpha", "1.5"])
        .args(["--sigma", &sigma.to_string(), "--seed", &seed.to_string()])
        .arg("--out")
        .arg(&samples)
        .output()
        .unwrap();
    let doc = stdout_json(&out);
    assert_eq!(doc["command"], "generate");
    assert_eq!(doc["n"], 80);
    assert_eq!(doc["d"], 300);
    assert_eq!(doc["seed"], seed);
    samples
}

#[test]
fn generate_solve_evaluate_diagnose_chain_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let samples = generate(dir.path(), 7, 0.05);

    let estimate = dir.path().join("e.txt");
    let out = bin().arg("solve").arg("--samples").arg(&samples).arg("--out").arg(&estimate).output().unwrap();
    let doc = stdout_json(&out);
    assert_eq!(doc["command"], "solve");
    assert!(doc["rank"].as_u64().unwrap() >= 1);
    assert!(doc["support_size"].as_u64().unwrap() >= doc["rank"].as_u64().unwrap());

    let out = bin()
        .args(["evaluate", "--s", "3", "--alpha", "1.5"])
        .arg("--samples")
        .arg(&samples)
        .arg("--estimate")
        .arg(&estimate)
        .output()
        .unwrap();
    let eval = stdout_json(&out);
    assert_eq!(eval["command"], "evaluate");

    let out = bin()
        .args(["diagnose", "--s", "3", "--alpha", "1.5"])
        .arg("--samples")
        .arg(&samples)
        .arg("--estimate")
        .arg(&estimate)
        .output()
        .unwrap();
    let diag = stdout_json(&out);
    assert_eq!(diag["command"], "diagnose");
    assert_eq!(diag["k"], eval["k"]);
    assert!(diag["structure"]["f_size"].as_u64().unwrap() >= 1);
    let checks = diag["recovery_checks"].as_array().unwrap();
    assert!(!checks.is_empty());

    // The file-driven path must reproduce the library pipeline bitwise:
    // same seed, same substreams, same arithmetic.
    let config = longtail::harness::RunConfig {
        d: 300,
        n: 80,
        s: 3.0,
        alpha: 1.5,
        sigma: 0.05,
        ..longtail::harness::RunConfig::default()
    };
    let row = longtail::harness::run_one(&config, 7).unwrap();
    assert_eq!(eval["report"]["in_dist_loss"].as_f64().unwrap(), row.in_dist_loss);
    assert_eq!(eval["report"]["ood"]["loss"].as_f64().unwrap(), row.ood_loss.unwrap());
    let forced: Vec<u64> = eval["report"]["ood"]["forced"]["indices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let want: Vec<u64> = row.ood_indices.iter().map(|&i| u64::from(i)).collect();
    assert_eq!(forced, want);
    assert_eq!(
        eval["report"]["recovery"]["common_avg_sq_error"].as_f64().unwrap(),
        row.common_avg_sq_error
    );
}

#[test]
fn bounds_json_matches_the_library_expressions() {
    let out = bin()
        .args(["bounds", "--d", "10000", "--n", "1000", "--s", "5"])
        .args(["--alpha", "1.5", "--sigma", "0.05"])
        .output()
        .unwrap();
    let doc = stdout_json(&out);
    assert_eq!(doc["command"], "bounds");
    let report = &doc["report"];
    assert_eq!(report["regime"], "noisy");
    assert_eq!(report["inputs"]["k"], 34);
    assert_eq!(report["inputs"]["t"], 2);

    let inputs = longtail::diagnostics::BoundInputs {
        n: 1000,
        d: 10_000,
        k: 34,
        sigma: 0.05,
        p_tail: report["inputs"]["p_tail"].as_f64().unwrap(),
        p_k: report["inputs"]["p_k"].as_f64().unwrap(),
        t: 2,
        power_law: Some((5.0, 1.5)),
    };
    let want = longtail::diagnostics::theorem_bounds(&inputs).unwrap();
    assert_eq!(report["general_bound"].as_f64().unwrap(), want.general_bound);
    assert_eq!(report["power_law_bound"].as_f64().unwrap(), want.power_law_bound.unwrap());
    assert_eq!(report["ood_bound"].as_f64().unwrap(), want.ood_bound);
}

#[test]
fn failures_are_json_on_stderr_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();

    // Missing input file: io error, exit 1.
    let out = bin()
        .arg("solve")
        .arg("--samples")
        .arg(dir.path().join("missing.txt"))
        .arg("--out")
        .arg(dir.path().join("x.txt"))
        .output()
        .unwrap();
    let err = stderr_error(&out, 1);
    assert_eq!(err["kind"], "io");
    assert!(err["message"].as_str().unwrap().contains("missing.txt"));

    // Invalid parameter: config error, exit 1.
    let out = bin()
        .args(["generate", "--d", "10", "--n", "5", "--alpha=-2"])
        .arg("--out")
        .arg(dir.path().join("bad.txt"))
        .output()
        .unwrap();
    let err = stderr_error(&out, 1);
    assert_eq!(err["kind"], "config");

    // Flag conflicting with the samples file: config error, exit 1.
    let samples = generate(dir.path(), 3, 0.0);
    let out = bin()
        .args(["diagnose", "--d", "299", "--s", "3", "--alpha", "1.5"])
        .arg("--samples")
        .arg(&samples)
        .output()
        .unwrap();
    let err = stderr_error(&out, 1);
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("conflicts"));

    // Unknown flag: usage error, exit 2.
    let out = bin().args(["sweep", "--no-such-flag"]).output().unwrap();
    let err = stderr_error(&out, 2);
    assert_eq!(err["kind"], "usage");

    // Corrupt samples file: format error, exit 1.
    let corrupt = dir.path().join("corrupt.txt");
    std::fs::write(&corrupt, "longtail-samples v1\nnot a header\n").unwrap();
    let out = bin()
        .arg("solve")
        .arg("--samples")
        .arg(&corrupt)
        .arg("--out")
        .arg(dir.path().join("y.txt"))
        .output()
        .unwrap();
    let err = stderr_error(&out, 1);
    assert_eq!(err["kind"], "format");
}

#[test]
fn environment_overrides_direct_output_and_keep_results_identical() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let out = bin()
        .args(["run", "--d", "120", "--n", "40", "--s", "3", "--alpha", "1.5"])
        .args(["--sigma", "0", "--n-seeds", "2", "--ood-indices", "100,110"])
        .env("LONGTAIL_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    let doc = stdout_json(&out);
    assert_eq!(doc["output_dir"].as_str().unwrap(), env_dir.to_str().unwrap());
    assert!(env_dir.join("results.csv").is_file());

    // Worker count must not leak into results: compare bytes across
    // thread-pool sizes.
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("threads_{threads}"));
        let out = bin()
            .args(["sweep", "--d", "120", "--n", "40", "--s", "3"])
            .args(["--sweep-alphas", "1.2,1.8", "--sweep-sigmas", "0,0.1"])
            .args(["--n-seeds", "2", "--ood-indices", "100,110"])
            .arg("--output-dir")
            .arg(&out_dir)
            .env("LONGTAIL_THREADS", threads)
            .output()
            .unwrap();
        stdout_json(&out);
        tables.push(std::fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, "d = 500\nn = 60\ns = 3.0\nalpha = 1.5\n").unwrap();
    let samples = dir.path().join("s.txt");
    let out = bin()
        .arg("generate")
        .arg("--config")
        .arg(&config_path)
        .args(["--n", "25", "--seed", "9"])
        .arg("--out")
        .arg(&samples)
        .output()
        .unwrap();
    let doc = stdout_json(&out);
    assert_eq!(doc["d"], 500, "file value survives");
    assert_eq!(doc["n"], 25, "flag wins over file");
}
