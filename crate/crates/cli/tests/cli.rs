//! End-to-end tests of the `rubin` binary: argument handling, exit codes,
//! determinism of seeded output, and numerical spot checks of each
//! subcommand against known values.

use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rubin");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rubin-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_canonical_model(dir: &std::path::Path) -> String {
    let path = dir.join("model.json");
    std::fs::write(&path, r#"{"m": 2, "q": [[-1.0, 1.0], [2.0, -2.0]], "rates": [1.0, 4.0]}"#)
        .unwrap();
    path.to_str().unwrap().to_owned()
}

fn write_engine(dir: &std::path::Path) -> String {
    let path = dir.join("engine.json");
    std::fs::write(&path, r#"{"weights": [0.6, 0.9], "truncation": 30, "h": [1.3, 0.7]}"#).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_poisson_is_deterministic_per_seed() {
    let args = ["simulate", "poisson", "--seed", "42", "--n", "20", "--rate", "1.5"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "same seed must give identical bytes");

    let c = run(&["simulate", "poisson", "--seed", "43", "--n", "20", "--rate", "1.5"]);
    assert_ne!(a.stdout, c.stdout, "different seeds must differ");

    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 20);
    for line in lines {
        let pts: Vec<Vec<f64>> = serde_json::from_str(line).unwrap();
        for p in pts {
            assert_eq!(p.len(), 1);
            assert!((0.0..1.0).contains(&p[0]));
        }
    }
}

#[test]
fn simulate_poisson_requires_exactly_one_intensity_source() {
    let both = run(&[
        "simulate", "poisson", "--seed", "1", "--rate", "1.0", "--intensity", "2.0",
    ]);
    assert_eq!(both.status.code(), Some(2));
    let neither = run(&["simulate", "poisson", "--seed", "1"]);
    assert_eq!(neither.status.code(), Some(2));
}

#[test]
fn simulate_inhomogeneous_piecewise_intensity() {
    let out = run(&[
        "simulate",
        "poisson",
        "--seed",
        "9",
        "--n",
        "50",
        "--intensity",
        r#"{"knots": [0.0, 0.5, 1.0], "values": [0.0, 4.0]}"#,
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines() {
        let pts: Vec<Vec<f64>> = serde_json::from_str(line).unwrap();
        for p in pts {
            assert!(p[0] >= 0.5, "zero-intensity half must stay empty, got {}", p[0]);
        }
    }
}

#[test]
fn estimate_between_identical_samples_is_zero() {
    let dir = scratch("estimate-zero");
    let xs = dir.join("xs.jsonl");
    let out = run(&[
        "simulate", "poisson", "--seed", "7", "--n", "30", "--rate", "1.0",
        "--out", xs.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let est = stdout_json(&run(&[
        "estimate",
        "--xs", xs.to_str().unwrap(),
        "--ys", xs.to_str().unwrap(),
        "--seed", "3",
    ]));
    assert_eq!(est["estimate"], 0.0);
    assert_eq!(est["n_pairs"], 30);
    assert_eq!(est["n_bootstrap"], 64);
}

#[test]
fn estimate_writes_cost_matrix_csv() {
    let dir = scratch("estimate-csv");
    let xs = dir.join("xs.jsonl");
    let ys = dir.join("ys.jsonl");
    run(&["simulate", "poisson", "--seed", "1", "--n", "5", "--rate", "1.0", "--out", xs.to_str().unwrap()]);
    run(&["simulate", "poisson", "--seed", "2", "--n", "7", "--rate", "1.0", "--out", ys.to_str().unwrap()]);
    let csv = dir.join("cost.csv");
    let out = run(&[
        "estimate",
        "--xs", xs.to_str().unwrap(),
        "--ys", ys.to_str().unwrap(),
        "--seed", "3",
        "--cost-csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let body = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 5);
    assert!(body.lines().all(|l| l.split(',').count() == 7));
}

#[test]
fn bound_poisson_matches_closed_form() {
    let v = stdout_json(&run(&[
        "bound", "poisson", "--reference", "1", "--h", "1.5", "--window", "0,1",
    ]));
    assert_eq!(v["variant"], "perturbation");
    assert!((v["value"].as_f64().unwrap() - 0.5665742265334132).abs() < 1e-15);
    assert_eq!(v["l1_term"], 0.5);
    assert_eq!(v["exponent"], 0.25);
}

#[test]
fn bound_mmpp_is_invariant_to_thread_count() {
    let dir = scratch("bound-mmpp");
    let model = write_canonical_model(&dir);
    let args = [
        "bound", "mmpp", "--seed", "5", "--model", model.as_str(),
        "--horizon", "1", "--lambda", "2", "--n-paths", "4000", "--variant", "total-mass",
    ];
    let one = Command::new(BIN).args(args).env("PPT_THREADS", "1").output().unwrap();
    let four = Command::new(BIN).args(args).env("PPT_THREADS", "4").output().unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout, "chunked substreams must not depend on thread count");
    let v: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!((3.0..5.0).contains(&value), "canonical bound near 3.8, got {value}");
    assert!(v["std_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn bound_mmpp_single_state_is_exact() {
    let dir = scratch("bound-degenerate");
    let model = dir.join("m1.json");
    std::fs::write(&model, r#"{"m": 1, "q": [[0.0]], "rates": [3.0]}"#).unwrap();
    let v = stdout_json(&run(&[
        "bound", "mmpp", "--seed", "1", "--model", model.to_str().unwrap(),
        "--horizon", "2", "--lambda", "3", "--n-paths", "200", "--variant", "total-mass",
    ]));
    assert_eq!(v["value"], 6.0);
    assert_eq!(v["std_error"], 0.0);
    assert_eq!(v["exponent"], 0.0);
}

#[test]
fn bound_resolvent_exact_and_mc() {
    let dir = scratch("bound-resolvent");
    let engine = write_engine(&dir);
    let v = stdout_json(&run(&["bound", "resolvent", "--engine", engine.as_str()]));
    // Mass 0.6·0.3 + 0.9·0.3 = 0.45 times E|RL| = 1.
    assert!((v["value"].as_f64().unwrap() - 0.45).abs() < 1e-9);

    // The MC route needs a homogeneous reference, so unequal weights fail…
    let mc_bad = run(&[
        "bound", "resolvent", "--engine", engine.as_str(), "--mc", "--seed", "1",
    ]);
    assert_eq!(mc_bad.status.code(), Some(2));

    // …and equal weights agree with the exact route within 3 se.
    let flat = dir.join("flat.json");
    std::fs::write(&flat, r#"{"weights": [0.8], "truncation": 40, "h": [1.4]}"#).unwrap();
    let exact = stdout_json(&run(&["bound", "resolvent", "--engine", flat.to_str().unwrap()]));
    let mc = stdout_json(&run(&[
        "bound", "resolvent", "--engine", flat.to_str().unwrap(),
        "--mc", "--seed", "2", "--n-samples", "40000",
    ]));
    let (e, m) = (exact["value"].as_f64().unwrap(), mc["value"].as_f64().unwrap());
    let se = mc["std_error"].as_f64().unwrap();
    assert!((e - m).abs() < 3.0 * se, "exact {e} vs mc {m} (se {se})");
}

#[test]
fn stationary_reports_canonical_summary() {
    let dir = scratch("stationary");
    let model = write_canonical_model(&dir);
    let v = stdout_json(&run(&["stationary", "--model", model.as_str()]));
    assert!((v["stationary"][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["mean_rate"], 2.0);
    assert_eq!(v["second_moment"], 6.0);
    assert!((v["burstiness"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn optimize_asymptotic_finds_sqrt_second_moment() {
    let dir = scratch("optimize");
    let model = write_canonical_model(&dir);
    let v = stdout_json(&run(&["optimize", "--model", model.as_str()]));
    assert_eq!(v["mode"], "asymptotic");
    let argmin = v["report"]["argmin"]["lambda"].as_f64().unwrap();
    assert!((argmin - 6.0f64.sqrt()).abs() < 1e-6);

    let finite = stdout_json(&run(&[
        "optimize", "--model", model.as_str(), "--horizon", "1",
        "--n-paths", "2000", "--seed", "8", "--variant", "total-mass",
    ]));
    assert_eq!(finite["mode"], "finite_horizon");
    let arg = finite["report"]["argmin"]["objective"].as_f64().unwrap();
    let mean = finite["report"]["stationary_mean"]["objective"].as_f64().unwrap();
    assert!(arg <= mean + 1e-9);
}

#[test]
fn optimize_finite_requires_seed() {
    let dir = scratch("optimize-seed");
    let model = write_canonical_model(&dir);
    let out = run(&["optimize", "--model", model.as_str(), "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_exit_codes_and_artifacts() {
    let dir = scratch("validate");
    let engine = write_engine(&dir);
    let mm = dir.join("generator.mtx");
    let csv = dir.join("residuals.csv");
    let ok = run(&[
        "validate", "--engine", engine.as_str(), "--max-order", "3",
        "--csv", csv.to_str().unwrap(),
        "--matrix-market", mm.to_str().unwrap(),
    ]);
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&ok.stderr));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("orders,eigenvalue,sup_scale,residual\n"));
    assert_eq!(table.lines().count(), 11, "header + C(3+2,2) = 10 multi-orders");
    let market = std::fs::read_to_string(&mm).unwrap();
    assert!(market.starts_with("%%MatrixMarket matrix coordinate real general\n"));
    let dims: Vec<usize> =
        market.lines().nth(1).unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(dims[0], 31 * 31);

    let strict = run(&["validate", "--engine", engine.as_str(), "--tol", "1e-30"]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn mmpp_simulation_dumps_paths() {
    let dir = scratch("simulate-mmpp");
    let model = write_canonical_model(&dir);
    let paths = dir.join("paths.jsonl");
    let out = run(&[
        "simulate", "mmpp", "--seed", "6", "--n", "4", "--model", model.as_str(),
        "--horizon", "2", "--paths-out", paths.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
    let body = std::fs::read_to_string(&paths).unwrap();
    assert_eq!(body.lines().count(), 4);
    for line in body.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["horizon"], 2.0);
        assert_eq!(v["times"][0], 0.0);
        assert!(v["states"].as_array().unwrap().len() == v["times"].as_array().unwrap().len());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "poisson"]).status.code(), Some(1), "--seed is mandatory");
    assert_eq!(run(&["estimate", "--xs", "a", "--ys", "b"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
